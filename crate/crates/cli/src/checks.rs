//! Randomized verification suites shared by `verify` and the acceptance
//! tests. Each instance draws from its own seeded stream, so results do not
//! depend on thread scheduling.

use qthermo::collision::xy_unitary;
use qthermo::demon::{canonical_two_qubit, NonlocalParams};
use qthermo::densemath::CMatrix;
use qthermo::random::{haar_unitary, random_density, substream, SimRng};
use qthermo::states::{
    classical_corr_state, thermal_ground_population, CorrelationFamily, CorrelationKind,
    DensityMatrix, QubitHamiltonian,
};
use qthermo::thermo::{
    bounds_from_budget, correlation_drop, entropy_budget, final_conditional_mutual_information,
    ProcessRecord,
};
use qthermo::trajectories::{
    averages_report, ift, ift_by_memory, ift_by_system_reservoir, FunctionalKind, TwoPointProcess,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SchemeChoice;

pub const SIGN_TOL: f64 = 1e-9;
pub const IDENTITY_TOL: f64 = 1e-10;
pub const AVERAGE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub instances: usize,
    /// Largest violation seen: for inequalities the most negative slack
    /// (reported as a positive number, zero if none), for identities the
    /// largest absolute defect.
    pub worst_defect: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn identity(name: &str, defects: &[f64], tolerance: f64) -> Self {
        let worst = defects.iter().map(|d| d.abs()).fold(0.0, f64::max);
        Self {
            name: name.into(),
            instances: defects.len(),
            worst_defect: worst,
            tolerance,
            passed: worst < tolerance,
        }
    }

    /// `slacks` should all be nonnegative.
    fn inequality(name: &str, slacks: &[f64], tolerance: f64) -> Self {
        let worst = slacks.iter().map(|s| (-s).max(0.0)).fold(0.0, f64::max);
        Self {
            name: name.into(),
            instances: slacks.len(),
            worst_defect: worst,
            tolerance,
            passed: worst <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
}

/// A single collision of a correlated pair with a thermal reservoir qubit.
#[derive(Clone, Debug)]
pub struct Instance {
    pub rho_sm: DensityMatrix,
    pub h_s: QubitHamiltonian,
    pub h_r: QubitHamiltonian,
    pub beta: f64,
    pub u_sr: CMatrix,
}

fn random_gate(rng: &mut SimRng) -> CMatrix {
    if rng.random::<bool>() {
        haar_unitary(4, rng)
    } else {
        let params = NonlocalParams::sample(rng);
        let locals: Vec<CMatrix> = (0..4).map(|_| haar_unitary(2, rng)).collect();
        canonical_two_qubit(params, &locals).expect("Haar locals are unitary")
    }
}

fn random_environment(rng: &mut SimRng) -> (QubitHamiltonian, QubitHamiltonian, f64) {
    let beta = 0.2 + 2.8 * rng.random::<f64>();
    let h_s = QubitHamiltonian::new(0.1 + 2.9 * rng.random::<f64>());
    let h_r = QubitHamiltonian::new(0.1 + 2.9 * rng.random::<f64>());
    (h_s, h_r, beta)
}

/// Classical or quantum family state with random `p` and noise, and a Haar
/// or canonical-random exchange gate.
pub fn family_instance(seed: u64, index: usize) -> Instance {
    let mut rng = substream(seed, index as u64);
    let kind = if rng.random::<bool>() {
        CorrelationKind::Classical
    } else {
        CorrelationKind::Quantum
    };
    let p = 0.05 + 0.9 * rng.random::<f64>();
    let noise = rng.random::<f64>();
    let rho_sm = CorrelationFamily { kind, p, noise }
        .state()
        .expect("parameters in range");
    let (h_s, h_r, beta) = random_environment(&mut rng);
    let u_sr = random_gate(&mut rng);
    Instance {
        rho_sm,
        h_s,
        h_r,
        beta,
        u_sr,
    }
}

/// Full-rank random state and a random gate.
pub fn generic_instance(seed: u64, index: usize) -> Instance {
    let mut rng = substream(seed, index as u64);
    let rho_sm = random_density(&[2, 2], &['S', 'M'], &mut rng);
    let (h_s, h_r, beta) = random_environment(&mut rng);
    let u_sr = random_gate(&mut rng);
    Instance {
        rho_sm,
        h_s,
        h_r,
        beta,
        u_sr,
    }
}

/// `ε = 0.5` classical state with `βE_S = 1`, `βE_R = 0.1`, `g = 1`.
pub fn reference_instance() -> Instance {
    let p = thermal_ground_population(1.0);
    Instance {
        rho_sm: classical_corr_state(p, 0.5).expect("valid reference state"),
        h_s: QubitHamiltonian::new(1.0),
        h_r: QubitHamiltonian::new(0.1),
        beta: 1.0,
        u_sr: xy_unitary(1.0),
    }
}

impl Instance {
    pub fn record(&self) -> ProcessRecord {
        ProcessRecord::unitary_collision(&self.rho_sm, self.h_s, self.h_r, self.beta, &self.u_sr)
            .expect("instance builds a valid record")
    }

    pub fn process(&self) -> TwoPointProcess {
        TwoPointProcess::new(&self.rho_sm, self.h_r, self.beta, &self.u_sr)
            .expect("instance builds a valid process")
    }
}

/// Entropy hierarchy, the dissipative-information identities and the
/// work/heat bounds over `n` family instances.
pub fn ensemble_checks(n: usize, seed: u64, inject_sign_flip: bool) -> Vec<CheckResult> {
    struct Row {
        sigma_s: f64,
        sigma_i: f64,
        gap: f64,
        cmi: f64,
        drop: f64,
        margins: [f64; 3],
    }
    let rows: Vec<Row> = (0..n)
        .into_par_iter()
        .map(|i| {
            let rec = family_instance(seed, i).record();
            let b = entropy_budget(&rec).expect("valid record");
            let sigma_i = if inject_sign_flip {
                -b.sigma_i
            } else {
                b.sigma_i
            };
            let cmi = final_conditional_mutual_information(&rec)
                .expect("valid record")
                .expect("joint state retained");
            let bounds = bounds_from_budget(&b, rec.work_ext, rec.beta);
            Row {
                sigma_s: b.sigma_s,
                sigma_i,
                gap: b.sigma_s_given_m - b.sigma_s,
                cmi: sigma_i - cmi,
                drop: sigma_i - correlation_drop(&rec).expect("valid record"),
                margins: [
                    bounds.margin_work_f,
                    bounds.margin_work_fcond,
                    bounds.margin_heat,
                ],
            }
        })
        .collect();
    let col = |f: &dyn Fn(&Row) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    vec![
        CheckResult::inequality("sigma_s_nonnegative", &col(&|r| r.sigma_s), SIGN_TOL),
        CheckResult::inequality("sigma_i_nonnegative", &col(&|r| r.sigma_i), SIGN_TOL),
        CheckResult::inequality(
            "conditional_exceeds_unconditional",
            &col(&|r| r.gap),
            SIGN_TOL,
        ),
        CheckResult::identity("sigma_i_equals_final_cmi", &col(&|r| r.cmi), IDENTITY_TOL),
        CheckResult::identity(
            "sigma_i_equals_correlation_drop",
            &col(&|r| r.drop),
            IDENTITY_TOL,
        ),
        CheckResult::inequality(
            "work_bound_unconditional",
            &col(&|r| r.margins[0]),
            SIGN_TOL,
        ),
        CheckResult::inequality("work_bound_conditional", &col(&|r| r.margins[1]), SIGN_TOL),
        CheckResult::inequality("heat_bound", &col(&|r| r.margins[2]), SIGN_TOL),
    ]
}

/// `<e^{-σ}> - 1` for every integral relation of one process.
pub fn ift_defects(process: &TwoPointProcess, scheme: SchemeChoice) -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    if scheme != SchemeChoice::Local {
        let t = process.global_tables().expect("valid process");
        let fwd = t.forward();
        let f = t
            .functional(FunctionalKind::SigmaSGivenMGlobal)
            .expect("global functional");
        out.push((
            "ift_sigma_s_given_m_global",
            ift(&fwd, &f).expect("matching pair") - 1.0,
        ));
    }
    if scheme != SchemeChoice::Global {
        let t = process.local_tables().expect("valid process");
        let fwd = t.forward();
        let f = t
            .functional(FunctionalKind::SigmaS)
            .expect("local functional");
        out.push(("ift_sigma_s_local", ift(&fwd, &f).unwrap() - 1.0));
        let f = t.functional(FunctionalKind::SigmaSGivenMLocal).unwrap();
        out.push(("ift_sigma_s_given_m_local", ift(&fwd, &f).unwrap() - 1.0));
        for v in ift_by_memory(&fwd, &f).unwrap().values() {
            out.push(("ift_sigma_s_given_m_local_per_memory", v - 1.0));
        }
        let f = t.functional(FunctionalKind::SigmaILocal).unwrap();
        out.push(("ift_sigma_i_local", ift(&fwd, &f).unwrap() - 1.0));
        for v in ift_by_system_reservoir(&fwd, &f).unwrap().values() {
            out.push(("ift_sigma_i_local_per_system_reservoir", v - 1.0));
        }
    }
    out
}

/// Integral relations on `n` full-rank random instances plus the reference
/// configuration.
pub fn ift_checks(n: usize, seed: u64, scheme: SchemeChoice) -> Vec<CheckResult> {
    let mut per: Vec<Vec<(&'static str, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| ift_defects(&generic_instance(seed, i).process(), scheme))
        .collect();
    per.push(ift_defects(&reference_instance().process(), scheme));
    group_identities(per.into_iter().flatten(), IDENTITY_TOL)
}

fn group_identities(
    items: impl Iterator<Item = (&'static str, f64)>,
    tol: f64,
) -> Vec<CheckResult> {
    let mut names: Vec<&'static str> = Vec::new();
    let mut groups: std::collections::BTreeMap<&'static str, Vec<f64>> = Default::default();
    for (name, d) in items {
        if !groups.contains_key(name) {
            names.push(name);
        }
        groups.entry(name).or_default().push(d);
    }
    names
        .into_iter()
        .map(|n| CheckResult::identity(n, &groups[n], tol))
        .collect()
}

/// Trajectory averages against ensemble quantities over `n` family
/// instances, and the sign of the coherence change on thermalizing exchange
/// collisions of the quantum family.
pub fn average_checks(n: usize, seed: u64) -> Vec<CheckResult> {
    let per: Vec<Vec<(&'static str, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let r = averages_report(&family_instance(seed, i).process()).expect("valid process");
            let e = r.ensemble;
            vec![
                (
                    "avg_sigma_s_given_m_global",
                    r.avg_sigma_s_given_m_global - e.sigma_s_given_m,
                ),
                ("avg_sigma_s_global", r.avg_sigma_s_global - e.sigma_s),
                ("avg_sigma_s_local", r.avg_sigma_s_local - e.sigma_s),
                (
                    "avg_sigma_s_given_m_local",
                    r.avg_sigma_s_given_m_local - e.dephased_entropy_change_plus_heat,
                ),
                ("avg_sigma_i_local_minus_delta_j", r.coherence_defect()),
            ]
        })
        .collect();
    let mut out = group_identities(per.into_iter().flatten(), AVERAGE_TOL);
    let delta_j: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed ^ 0x5eed, i as u64);
            let p = 0.05 + 0.9 * rng.random::<f64>();
            let rho = CorrelationFamily {
                kind: CorrelationKind::Quantum,
                p,
                noise: rng.random::<f64>(),
            }
            .state()
            .expect("parameters in range");
            let (_, h_r, beta) = random_environment(&mut rng);
            let g = rng.random::<f64>() * std::f64::consts::FRAC_PI_2;
            let process =
                TwoPointProcess::new(&rho, h_r, beta, &xy_unitary(g)).expect("valid process");
            -process.ensemble().expect("valid process").delta_j
        })
        .collect();
    out.push(CheckResult::inequality(
        "delta_j_nonpositive_on_exchange",
        &delta_j,
        1e-12,
    ));
    out
}

pub fn run_verify(
    instances: usize,
    seed: u64,
    scheme: SchemeChoice,
    inject_sign_flip: bool,
) -> VerifyReport {
    let mut checks = ensemble_checks(instances, seed, inject_sign_flip);
    checks.extend(ift_checks(instances, seed, scheme));
    checks.extend(average_checks(instances, seed));
    let all_passed = checks.iter().all(|c| c.passed);
    VerifyReport {
        seed,
        checks,
        all_passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let r = run_verify(40, 1, SchemeChoice::Both, false);
        for c in &r.checks {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn sign_flip_is_caught() {
        let checks = ensemble_checks(40, 1, true);
        assert!(
            !checks
                .iter()
                .find(|c| c.name == "sigma_i_nonnegative")
                .unwrap()
                .passed
        );
    }

    #[test]
    fn instances_are_reproducible() {
        let a = family_instance(9, 3);
        let b = family_instance(9, 3);
        assert_eq!(a.rho_sm, b.rho_sm);
        assert!(a.u_sr.max_abs_diff(&b.u_sr) == 0.0);
    }
}
