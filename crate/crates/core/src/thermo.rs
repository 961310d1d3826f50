//! Ensemble thermodynamics of one system-memory-reservoir process: heat,
//! conditional and unconditional entropy production, dissipative
//! information, free energies and the work/heat bounds.
//!
//! The reservoir starts thermal, so the entropy flux is `β Q_R` and does
//! not depend on whether the system entropy is conditioned on the memory.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densemath::{self, CMatrix};
use crate::infomeasures::{
    conditional_entropy, conditional_mutual_information, mutual_information, vn_entropy,
};
use crate::states::{thermal_state, DensityMatrix, QubitHamiltonian, StateError};

/// Slack allowed on the second-law style inequalities.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermoError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("initial reservoir state is not thermal (trace distance {0:.3e})")]
    NotThermal(f64),
    #[error("inverse temperature must be positive and finite, got {0}")]
    Beta(f64),
    #[error("state is missing subsystem '{0}'")]
    MissingSubsystem(char),
}

pub type Result<T> = std::result::Result<T, ThermoError>;

/// Everything needed to evaluate one process from `t_i` to `t_f`.
///
/// System-memory states carry labels `S` and `M`; reservoir states carry
/// `R`. `msr_final`, when present, is the joint final state on `M, S, R` in
/// any label order.
#[derive(Clone, Debug)]
pub struct ProcessRecord {
    pub rho_sm_initial: DensityMatrix,
    pub rho_sm_final: DensityMatrix,
    pub rho_r_initial: DensityMatrix,
    pub rho_r_final: DensityMatrix,
    pub h_r: QubitHamiltonian,
    pub h_s_initial: QubitHamiltonian,
    pub h_s_final: QubitHamiltonian,
    pub beta: f64,
    /// Work done on the system.
    pub work_ext: f64,
    pub msr_final: Option<DensityMatrix>,
}

impl ProcessRecord {
    /// Collide the system of `rho_sm` with a fresh thermal reservoir qubit via
    /// `u_sr` (ordered S then R) at fixed system Hamiltonian. The work is the
    /// coupling work `Tr[(H_S + H_R)(ρ_f - ρ_i)]`, and the joint final state is
    /// retained.
    pub fn unitary_collision(
        rho_sm: &DensityMatrix,
        h_s: QubitHamiltonian,
        h_r: QubitHamiltonian,
        beta: f64,
        u_sr: &CMatrix,
    ) -> Result<Self> {
        check_beta(beta)?;
        require(rho_sm, &['S', 'M'])?;
        let rho_r = thermal_state(h_r, beta, 'R')?;
        let joint = rho_sm.tensor(&rho_r)?;
        let after = joint.evolve_on(u_sr, &['S', 'R'])?;
        let rho_sm_final = after.reduce(&['S', 'M'])?;
        let rho_r_final = after.reduce(&['R'])?;
        let e_s = |r: &DensityMatrix| r.reduce(&['S']).map(|s| s.expectation(&h_s.matrix()));
        let work = e_s(&rho_sm_final)? - e_s(rho_sm)? + rho_r_final.expectation(&h_r.matrix())
            - rho_r.expectation(&h_r.matrix());
        Ok(Self {
            rho_sm_initial: rho_sm.clone(),
            rho_sm_final,
            rho_r_initial: rho_r,
            rho_r_final,
            h_r,
            h_s_initial: h_s,
            h_s_final: h_s,
            beta,
            work_ext: work,
            msr_final: Some(after),
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        require(&self.rho_sm_initial, &['S', 'M'])?;
        require(&self.rho_sm_final, &['S', 'M'])?;
        require(&self.rho_r_initial, &['R'])?;
        require(&self.rho_r_final, &['R'])?;
        let thermal = thermal_state(self.h_r, self.beta, 'R')?;
        let d = self.rho_r_initial.trace_distance(&thermal)?;
        if d > 1e-10 {
            return Err(ThermoError::NotThermal(d));
        }
        if let Some(msr) = &self.msr_final {
            require(msr, &['M', 'S', 'R'])?;
        }
        Ok(())
    }

    pub fn temperature(&self) -> f64 {
        1.0 / self.beta
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(ThermoError::Beta(beta));
    }
    Ok(())
}

fn require(rho: &DensityMatrix, labels: &[char]) -> Result<()> {
    for &l in labels {
        if !rho.has_label(l) {
            return Err(ThermoError::MissingSubsystem(l));
        }
    }
    Ok(())
}

fn system_energy(rho_sm: &DensityMatrix, h: QubitHamiltonian) -> Result<f64> {
    Ok(rho_sm.reduce(&['S'])?.expectation(&h.matrix()))
}

fn s_s(rho_sm: &DensityMatrix) -> Result<f64> {
    Ok(vn_entropy(&rho_sm.reduce(&['S'])?)?)
}

fn s_s_given_m(rho_sm: &DensityMatrix) -> Result<f64> {
    Ok(conditional_entropy(&rho_sm.reduce(&['S', 'M'])?, 'M')?)
}

/// `Q_R = Tr[(ρ_R^f - ρ_R^i) H_R]`.
pub fn heat_to_reservoir(record: &ProcessRecord) -> Result<f64> {
    let h = record.h_r.matrix();
    if record.rho_r_final.dim() != 2 || record.rho_r_initial.dim() != 2 {
        return Err(StateError::Math(densemath::MathError::DimensionMismatch(
            "reservoir states must be single qubits".into(),
        ))
        .into());
    }
    Ok(record.rho_r_final.expectation(&h) - record.rho_r_initial.expectation(&h))
}

/// `Σ_S = ΔS_S + β Q_R`.
pub fn entropy_production_unconditional(record: &ProcessRecord) -> Result<f64> {
    record.validate()?;
    let ds = s_s(&record.rho_sm_final)? - s_s(&record.rho_sm_initial)?;
    Ok(ds + record.beta * heat_to_reservoir(record)?)
}

/// `Σ_{S|M} = ΔS_{S|M} + β Q_R`.
pub fn entropy_production_conditional(record: &ProcessRecord) -> Result<f64> {
    record.validate()?;
    let ds = s_s_given_m(&record.rho_sm_final)? - s_s_given_m(&record.rho_sm_initial)?;
    Ok(ds + record.beta * heat_to_reservoir(record)?)
}

/// `Σ_I = Σ_{S|M} - Σ_S`.
pub fn dissipative_information(record: &ProcessRecord) -> Result<f64> {
    Ok(entropy_production_conditional(record)? - entropy_production_unconditional(record)?)
}

/// `-ΔI_{S:M}`, which equals the dissipative information.
pub fn correlation_drop(record: &ProcessRecord) -> Result<f64> {
    let i = |r: &DensityMatrix| mutual_information(r, &['S'], &['M']);
    Ok(i(&record.rho_sm_initial)? - i(&record.rho_sm_final)?)
}

/// `I_{M:R|S}` of the retained joint final state, if any.
pub fn final_conditional_mutual_information(record: &ProcessRecord) -> Result<Option<f64>> {
    match &record.msr_final {
        None => Ok(None),
        Some(msr) => Ok(Some(conditional_mutual_information(
            msr,
            &['M'],
            &['R'],
            &['S'],
        )?)),
    }
}

/// `F_S = Tr(H_S ρ_S) - T S_S`. `rho_s` may carry extra subsystems; only `S` is used.
pub fn free_energy(rho_s: &DensityMatrix, h_s: QubitHamiltonian, temperature: f64) -> Result<f64> {
    let s = rho_s.reduce(&['S'])?;
    Ok(s.expectation(&h_s.matrix()) - temperature * vn_entropy(&s)?)
}

/// `F_{S|M} = Tr(H_S ρ_S) - T S_{S|M}`.
pub fn conditional_free_energy(
    rho_sm: &DensityMatrix,
    h_s: QubitHamiltonian,
    temperature: f64,
) -> Result<f64> {
    Ok(system_energy(rho_sm, h_s)? - temperature * s_s_given_m(rho_sm)?)
}

/// Per-process entropy and free-energy bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyBudget {
    pub sigma_s: f64,
    pub sigma_s_given_m: f64,
    pub sigma_i: f64,
    pub delta_s_s: f64,
    pub delta_s_s_given_m: f64,
    pub heat_q_r: f64,
    pub delta_f_s: f64,
    pub delta_f_s_given_m: f64,
}

pub fn entropy_budget(record: &ProcessRecord) -> Result<EntropyBudget> {
    record.validate()?;
    let t = record.temperature();
    let q = heat_to_reservoir(record)?;
    let delta_s_s = s_s(&record.rho_sm_final)? - s_s(&record.rho_sm_initial)?;
    let delta_s_s_given_m =
        s_s_given_m(&record.rho_sm_final)? - s_s_given_m(&record.rho_sm_initial)?;
    let sigma_s = delta_s_s + record.beta * q;
    let sigma_s_given_m = delta_s_s_given_m + record.beta * q;
    let delta_f_s = free_energy(&record.rho_sm_final, record.h_s_final, t)?
        - free_energy(&record.rho_sm_initial, record.h_s_initial, t)?;
    let delta_f_s_given_m = conditional_free_energy(&record.rho_sm_final, record.h_s_final, t)?
        - conditional_free_energy(&record.rho_sm_initial, record.h_s_initial, t)?;
    Ok(EntropyBudget {
        sigma_s,
        sigma_s_given_m,
        sigma_i: sigma_s_given_m - sigma_s,
        delta_s_s,
        delta_s_s_given_m,
        heat_q_r: q,
        delta_f_s,
        delta_f_s_given_m,
    })
}

/// Outcome of the work and heat bound checks with their margins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub work_vs_f: bool,
    pub work_vs_fcond_plus_tsigma_i: bool,
    pub heat_vs_scond_minus_sigma_i: bool,
    /// `W - ΔF_S`.
    pub margin_work_f: f64,
    /// `W - ΔF_{S|M} - T Σ_I`.
    pub margin_work_fcond: f64,
    /// `ΔS_{S|M} - Σ_I - β Q_S` with `Q_S = -Q_R`.
    pub margin_heat: f64,
}

impl BoundsReport {
    pub fn all_hold(&self) -> bool {
        self.work_vs_f && self.work_vs_fcond_plus_tsigma_i && self.heat_vs_scond_minus_sigma_i
    }
}

pub fn bounds_check(record: &ProcessRecord) -> Result<BoundsReport> {
    let b = entropy_budget(record)?;
    Ok(bounds_from_budget(&b, record.work_ext, record.beta))
}

pub fn bounds_from_budget(b: &EntropyBudget, work: f64, beta: f64) -> BoundsReport {
    let t = 1.0 / beta;
    let q_s = -b.heat_q_r;
    let margin_work_f = work - b.delta_f_s;
    let margin_work_fcond = work - b.delta_f_s_given_m - t * b.sigma_i;
    let margin_heat = b.delta_s_s_given_m - b.sigma_i - beta * q_s;
    BoundsReport {
        work_vs_f: margin_work_f >= -BOUND_TOL,
        work_vs_fcond_plus_tsigma_i: margin_work_fcond >= -BOUND_TOL,
        heat_vs_scond_minus_sigma_i: margin_heat >= -BOUND_TOL,
        margin_work_f,
        margin_work_fcond,
        margin_heat,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densemath::{re, CMatrix};
    use crate::infomeasures::binary_entropy;
    use crate::random::{haar_unitary, random_density, rng_from_seed};
    use crate::states::{classical_corr_state, quantum_corr_state};
    use proptest::prelude::*;

    fn swap() -> CMatrix {
        let mut m = CMatrix::zeros(4, 4);
        m[(0, 0)] = re(1.0);
        m[(1, 2)] = re(1.0);
        m[(2, 1)] = re(1.0);
        m[(3, 3)] = re(1.0);
        m
    }

    fn thermal_sm(beta_e: f64) -> DensityMatrix {
        let s = thermal_state(QubitHamiltonian::new(beta_e), 1.0, 'S').unwrap();
        let m = thermal_state(QubitHamiltonian::new(beta_e), 1.0, 'M').unwrap();
        s.tensor(&m).unwrap()
    }

    #[test]
    fn identity_process_is_neutral() {
        let sm = classical_corr_state(0.7, 0.2).unwrap();
        let h = QubitHamiltonian::new(1.0);
        let rec = ProcessRecord::unitary_collision(&sm, h, h, 1.0, &CMatrix::identity(4)).unwrap();
        assert_eq!(heat_to_reservoir(&rec).unwrap(), 0.0);
        assert!(entropy_production_unconditional(&rec).unwrap().abs() < 1e-12);
        let rep = bounds_check(&rec).unwrap();
        assert!(rep.all_hold());
        assert!(
            rep.margin_work_f.abs() < 1e-10
                && rep.margin_work_fcond.abs() < 1e-10
                && rep.margin_heat.abs() < 1e-10
        );
    }

    #[test]
    fn local_unitary_produces_no_entropy() {
        let sm = quantum_corr_state(0.7, 0.3).unwrap();
        let h = QubitHamiltonian::new(1.0);
        let mut rng = rng_from_seed(5);
        let u_s = haar_unitary(2, &mut rng);
        let u_sr = densemath::tensor(&u_s, &CMatrix::identity(2));
        let rec = ProcessRecord::unitary_collision(&sm, h, QubitHamiltonian::new(0.3), 1.0, &u_sr)
            .unwrap();
        assert!(entropy_production_unconditional(&rec).unwrap().abs() < 1e-10);
    }

    #[test]
    fn swap_heat_is_population_bookkeeping() {
        let (e_s, e_r) = (1.0, 0.1);
        let sm = thermal_sm(e_s);
        let rec = ProcessRecord::unitary_collision(
            &sm,
            QubitHamiltonian::new(e_s),
            QubitHamiltonian::new(e_r),
            1.0,
            &swap(),
        )
        .unwrap();
        let p_s1 = (-e_s).exp() / (1.0 + (-e_s).exp());
        let p_r1 = (-e_r).exp() / (1.0 + (-e_r).exp());
        assert!((heat_to_reservoir(&rec).unwrap() - e_r * (p_s1 - p_r1)).abs() < 1e-14);
    }

    #[test]
    fn product_initial_has_no_dissipative_information() {
        let sm = thermal_sm(1.0);
        let u = haar_unitary(4, &mut rng_from_seed(8));
        let rec = ProcessRecord::unitary_collision(
            &sm,
            QubitHamiltonian::new(1.0),
            QubitHamiltonian::new(0.5),
            1.0,
            &u,
        )
        .unwrap();
        assert!(dissipative_information(&rec).unwrap().abs() < 1e-10);
        let b = entropy_budget(&rec).unwrap();
        assert!((b.sigma_s_given_m - b.sigma_s).abs() < 1e-10);
    }

    #[test]
    fn full_decorrelation_by_swap() {
        // swapping S with a reservoir prepared in the same thermal state
        // removes all S-M correlation and leaves ρ_S unchanged
        let p = 1.0 / (1.0 + (-1.0f64).exp());
        let h = QubitHamiltonian::new(1.0);
        for (sm, factor) in [
            (classical_corr_state(p, 0.0).unwrap(), 1.0),
            (quantum_corr_state(p, 0.0).unwrap(), 2.0),
        ] {
            let rec = ProcessRecord::unitary_collision(&sm, h, h, 1.0, &swap()).unwrap();
            let si = dissipative_information(&rec).unwrap();
            assert!((si - factor * binary_entropy(p)).abs() < 1e-10);
            assert!(entropy_production_unconditional(&rec).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn free_energy_examples() {
        let ground = DensityMatrix::diagonal(&[1.0, 0.0], &[2], &['S']).unwrap();
        assert!(
            free_energy(&ground, QubitHamiltonian::new(1.0), 1.0)
                .unwrap()
                .abs()
                < 1e-12
        );
        let th = thermal_state(QubitHamiltonian::new(1.0), 1.0, 'S').unwrap();
        let p1 = (-1.0f64).exp() / (1.0 + (-1.0f64).exp());
        let want = p1 - binary_entropy(p1);
        assert!((free_energy(&th, QubitHamiltonian::new(1.0), 1.0).unwrap() - want).abs() < 1e-14);
        // thermal free energy is -T ln Z
        assert!((want + (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-14);
    }

    #[test]
    fn conditional_free_energy_sign_convention() {
        let p = 0.7;
        let t = 2.0;
        let h = QubitHamiltonian::new(1.0);
        let q0 = quantum_corr_state(p, 0.0).unwrap();
        let f = free_energy(&q0, h, t).unwrap();
        let fc = conditional_free_energy(&q0, h, t).unwrap();
        // S_{S|M} = -H(p) and S_S = H(p): F_{S|M} - F_S = 2 T H(p)
        assert!((fc - f - 2.0 * t * binary_entropy(p)).abs() < 1e-12);
    }

    #[test]
    fn first_law_closure_makes_every_margin_the_entropy_production() {
        let mut rng = rng_from_seed(21);
        let sm = random_density(&[2, 2], &['S', 'M'], &mut rng);
        let u = haar_unitary(4, &mut rng);
        let rec = ProcessRecord::unitary_collision(
            &sm,
            QubitHamiltonian::new(0.8),
            QubitHamiltonian::new(0.4),
            1.3,
            &u,
        )
        .unwrap();
        let b = entropy_budget(&rec).unwrap();
        let rep = bounds_check(&rec).unwrap();
        let t_sigma = b.sigma_s / rec.beta;
        assert!((rep.margin_work_f - t_sigma).abs() < 1e-10);
        assert!((rep.margin_work_fcond - t_sigma).abs() < 1e-10);
        assert!((rep.margin_heat - b.sigma_s).abs() < 1e-10);
    }

    #[test]
    fn record_rejects_non_thermal_reservoir() {
        let sm = thermal_sm(1.0);
        let mut rec = ProcessRecord::unitary_collision(
            &sm,
            QubitHamiltonian::new(1.0),
            QubitHamiltonian::new(1.0),
            1.0,
            &swap(),
        )
        .unwrap();
        rec.rho_r_initial = DensityMatrix::diagonal(&[0.5, 0.5], &[2], &['R']).unwrap();
        assert!(matches!(
            entropy_budget(&rec),
            Err(ThermoError::NotThermal(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn second_law_ordering_and_identities(seed in any::<u64>(), e_s in 0.05f64..3.0, e_r in 0.05f64..3.0, beta in 0.1f64..3.0) {
            let mut rng = rng_from_seed(seed);
            let sm = random_density(&[2, 2], &['S', 'M'], &mut rng);
            let u = haar_unitary(4, &mut rng);
            let rec = ProcessRecord::unitary_collision(&sm, QubitHamiltonian::new(e_s), QubitHamiltonian::new(e_r), beta, &u).unwrap();
            let b = entropy_budget(&rec).unwrap();
            prop_assert!(b.sigma_s >= -1e-9);
            prop_assert!(b.sigma_s_given_m >= b.sigma_s - 1e-9);
            prop_assert!((b.sigma_s_given_m - b.sigma_s - b.sigma_i).abs() < 1e-12);
            prop_assert!((b.sigma_i - correlation_drop(&rec).unwrap()).abs() < 1e-10);
            let cmi = final_conditional_mutual_information(&rec).unwrap().unwrap();
            prop_assert!((b.sigma_i - cmi).abs() < 1e-10);
            prop_assert!(bounds_check(&rec).unwrap().all_hold());
        }
    }
}
