use qthermo::collision::xy_unitary;
use qthermo::random::{haar_unitary, random_density, rng_from_seed};
use qthermo::states::QubitHamiltonian;
use qthermo::trajectories::{
    ift, ift_by_memory, ift_by_system_reservoir, FunctionalKind, Scheme, TwoPointProcess,
};
use rand::Rng;

const KINDS: [(FunctionalKind, Scheme); 4] = [
    (FunctionalKind::SigmaSGivenMGlobal, Scheme::Global),
    (FunctionalKind::SigmaS, Scheme::Local),
    (FunctionalKind::SigmaSGivenMLocal, Scheme::Local),
    (FunctionalKind::SigmaILocal, Scheme::Local),
];

fn check_process(proc_: &TwoPointProcess) -> f64 {
    let mut worst: f64 = 0.0;
    for (kind, scheme) in KINDS {
        let tables = proc_.tables_for(scheme).unwrap();
        let fwd = tables.forward();
        let f = tables.functional(kind).unwrap();
        worst = worst.max((ift(&fwd, &f).unwrap() - 1.0).abs());
        if scheme == Scheme::Local {
            for v in ift_by_memory(&fwd, &f).unwrap().values() {
                if kind == FunctionalKind::SigmaSGivenMLocal {
                    worst = worst.max((v - 1.0).abs());
                }
            }
            for v in ift_by_system_reservoir(&fwd, &f).unwrap().values() {
                if kind == FunctionalKind::SigmaILocal {
                    worst = worst.max((v - 1.0).abs());
                }
            }
        }
    }
    worst
}

#[test]
fn integral_relations_hold_on_random_full_rank_instances() {
    let mut rng = rng_from_seed(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let rho = random_density(&[2, 2], &['S', 'M'], &mut rng);
        let u = if rng.random::<bool>() {
            haar_unitary(4, &mut rng)
        } else {
            xy_unitary(rng.random::<f64>() * 3.0)
        };
        let beta = 0.1 + 2.0 * rng.random::<f64>();
        let h_r = QubitHamiltonian::new(0.1 + 2.0 * rng.random::<f64>());
        let p = TwoPointProcess::new(&rho, h_r, beta, &u).unwrap();
        worst = worst.max(check_process(&p));
    }
    assert!(worst < 1e-10, "worst IFT defect {worst:e}");
}
