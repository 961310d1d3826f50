//! Quench-and-collide work extraction from a thermal qubit.
//!
//! At step `n` the system's excited level is lowered by `δE`, a fresh
//! reservoir qubit is prepared thermal at an energy chosen so that one XY
//! collision re-thermalizes the system at the quenched level, the pair
//! collides and the reservoir qubit is discarded. The memory is never
//! touched, so any system-memory correlation is dissipated into the
//! reservoir.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densemath::{re, CMatrix};
use crate::infomeasures::{
    conditional_entropy, conditional_mutual_information, mutual_information, vn_entropy,
};
use crate::states::{
    logistic, thermal_state, CorrelationFamily, CorrelationKind, DensityMatrix, QubitHamiltonian,
};
use crate::thermo::{self, ProcessRecord, ThermoError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollisionError {
    #[error("invalid protocol configuration: {0}")]
    Config(String),
    #[error(
        "no thermal reservoir energy re-thermalizes the system for E = {e_s}, δE = {delta_e}, β = {beta}, g = {g} \
         (log argument {ratio:.6e}); the coupling is too weak for this quench"
    )]
    ReservoirEnergy {
        e_s: f64,
        delta_e: f64,
        beta: f64,
        g: f64,
        ratio: f64,
    },
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        source: Box<CollisionError>,
    },
    #[error(transparent)]
    Thermo(#[from] ThermoError),
}

impl From<crate::states::StateError> for CollisionError {
    fn from(e: crate::states::StateError) -> Self {
        CollisionError::Thermo(e.into())
    }
}

pub type Result<T> = std::result::Result<T, CollisionError>;

/// `exp(-i g (σx⊗σy - σy⊗σx))` on (S, R): a partial swap of `|01>` and `|10>`.
pub fn xy_unitary(g: f64) -> CMatrix {
    let (s, c) = (2.0 * g).sin_cos();
    let mut u = CMatrix::identity(4);
    u[(1, 1)] = re(c);
    u[(1, 2)] = re(s);
    u[(2, 1)] = re(-s);
    u[(2, 2)] = re(c);
    u
}

/// Reservoir excited energy that returns a thermal system at level `e_s` to
/// thermal equilibrium at level `e_s - delta_e` after one XY collision.
pub fn reservoir_energy(e_s: f64, delta_e: f64, beta: f64, g: f64) -> Result<f64> {
    let c2 = (2.0 * g).cos().powi(2);
    let s2 = (2.0 * g).sin().powi(2);
    let num = (c2 * (beta * delta_e).exp() - s2 * (beta * e_s).exp() - 1.0) * (beta * e_s).exp();
    let den =
        c2 * (beta * e_s).exp() - s2 * (beta * delta_e).exp() - (beta * (e_s + delta_e)).exp();
    let ratio = num / den;
    if !(ratio > 0.0 && ratio.is_finite()) || beta <= 0.0 {
        return Err(CollisionError::ReservoirEnergy {
            e_s,
            delta_e,
            beta,
            g,
            ratio,
        });
    }
    Ok(ratio.ln() / beta)
}

/// `T ln[(1+e^{-βE_i})/(1+e^{-βE_f})]`, the quasistatic limit of the total work.
pub fn quasistatic_work(beta: f64, e_initial: f64, e_final: f64) -> f64 {
    ((1.0 + (-beta * e_initial).exp()) / (1.0 + (-beta * e_final).exp())).ln() / beta
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub beta: f64,
    pub e_initial: f64,
    pub e_final: f64,
    pub delta_e: f64,
    pub g: f64,
    pub correlation: CorrelationFamily,
    /// Keep the joint M-S-R state of each collision for conditional mutual
    /// information checks.
    #[serde(default)]
    pub retain_msr: bool,
}

impl ProtocolConfig {
    /// β = 1, E^i = 1, E^f = 0.1, δE = 0.0045 E^i, g = 0.1, with the initial
    /// system marginal thermal at E^i.
    pub fn reference(kind: CorrelationKind, noise: f64) -> Self {
        let beta = 1.0;
        let e_initial = 1.0;
        Self {
            beta,
            e_initial,
            e_final: 0.1,
            delta_e: 0.0045,
            g: 0.1,
            correlation: CorrelationFamily {
                kind,
                p: logistic(beta * e_initial),
                noise,
            },
            retain_msr: false,
        }
    }

    pub fn steps(&self) -> Result<usize> {
        if !(self.delta_e > 0.0) || !self.delta_e.is_finite() {
            return Err(CollisionError::Config(format!(
                "δE must be positive, got {}",
                self.delta_e
            )));
        }
        let span = self.e_initial - self.e_final;
        let n = (span / self.delta_e).round();
        if (n * self.delta_e - span).abs() > 1e-9 {
            return Err(CollisionError::Config(format!(
                "E_i - E_f = {span} is not a whole number of quenches of δE = {}",
                self.delta_e
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(CollisionError::Config(m));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return cfg(format!("β must be positive, got {}", self.beta));
        }
        if !(self.e_initial > self.e_final && self.e_final >= 0.0 && self.e_initial.is_finite()) {
            return cfg(format!(
                "need E_i > E_f >= 0, got {} and {}",
                self.e_initial, self.e_final
            ));
        }
        if !(self.g > 0.0 && self.g <= std::f64::consts::FRAC_PI_2) {
            return cfg(format!("g must lie in (0, π/2], got {}", self.g));
        }
        self.correlation
            .validate()
            .map_err(|e| CollisionError::Config(e.to_string()))?;
        let p_thermal = logistic(self.beta * self.e_initial);
        if (self.correlation.p - p_thermal).abs() > 1e-9 {
            return cfg(format!(
                "initial system marginal must be thermal at E_i: p = {} but (1+e^(-βE_i))^-1 = {p_thermal}",
                self.correlation.p
            ));
        }
        self.steps()?;
        Ok(())
    }
}

/// Outcome of one quench-collide step.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub index: usize,
    pub e_s_before: f64,
    pub e_s_after: f64,
    pub e_r: f64,
    pub work_quench: f64,
    pub work_coupling: f64,
    pub heat_q_r: f64,
    /// Per-step record; its `work_ext` is the quench plus coupling work.
    pub record: ProcessRecord,
}

/// One step starting from level `e_s` (state `state_sm` on S, M).
pub fn step(
    state_sm: &DensityMatrix,
    e_s: f64,
    index: usize,
    config: &ProtocolConfig,
) -> Result<(DensityMatrix, StepResult)> {
    let beta = config.beta;
    let e_next = e_s - config.delta_e;
    let e_r = reservoir_energy(e_s, config.delta_e, beta, config.g)?;
    let h_before = QubitHamiltonian::new(e_s);
    let h_after = QubitHamiltonian::new(e_next);
    let h_r = QubitHamiltonian::new(e_r);

    let excited = state_sm.reduce(&['S'])?.populations()[1];
    let work_quench = -config.delta_e * excited;

    let rho_r = thermal_state(h_r, beta, 'R')?;
    let joint = state_sm.tensor(&rho_r)?;
    let after = joint.evolve_on(&xy_unitary(config.g), &['S', 'R'])?;
    let next_sm = after.reduce(&['S', 'M'])?;
    let rho_r_final = after.reduce(&['R'])?;

    let energy = |rho: &DensityMatrix, l: char, h: QubitHamiltonian| {
        rho.reduce(&[l]).map(|r| r.expectation(&h.matrix()))
    };
    let heat_q_r = rho_r_final.expectation(&h_r.matrix()) - rho_r.expectation(&h_r.matrix());
    let work_coupling =
        energy(&next_sm, 'S', h_after)? - energy(state_sm, 'S', h_after)? + heat_q_r;

    let record = ProcessRecord {
        rho_sm_initial: state_sm.clone(),
        rho_sm_final: next_sm.clone(),
        rho_r_initial: rho_r,
        rho_r_final,
        h_r,
        h_s_initial: h_before,
        h_s_final: h_after,
        beta,
        work_ext: work_quench + work_coupling,
        msr_final: config.retain_msr.then_some(after),
    };
    Ok((
        next_sm,
        StepResult {
            index,
            e_s_before: e_s,
            e_s_after: e_next,
            e_r,
            work_quench,
            work_coupling,
            heat_q_r,
            record,
        },
    ))
}

/// One row per completed step; all thermodynamic columns are cumulative from
/// the start of the protocol.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeRow {
    pub step: usize,
    pub e_s: f64,
    pub e_r: f64,
    pub work_quench: f64,
    pub work_coupling: f64,
    pub work: f64,
    pub heat_q_r: f64,
    pub sigma_s: f64,
    pub sigma_s_given_m: f64,
    pub sigma_i: f64,
    pub delta_s_s: f64,
    pub delta_s_s_given_m: f64,
    pub delta_f_s: f64,
    pub delta_f_s_given_m: f64,
    /// `-ΔI_{S:M}` since the start.
    pub correlation_drop: f64,
    /// Dissipative information of this step alone.
    pub step_sigma_i: f64,
    /// `I_{M:R_n|S}` after this step's collision, when retained.
    pub step_cmi: Option<f64>,
    /// Trace distance of ρ_S from the thermal state at the current level.
    pub thermal_defect: f64,
    /// Trace distance of ρ_M from its initial value.
    pub memory_drift: f64,
}

impl TimeRow {
    pub const COLUMNS: [&'static str; 19] = [
        "step",
        "e_s",
        "e_r",
        "work_quench",
        "work_coupling",
        "work",
        "heat_q_r",
        "sigma_s",
        "sigma_s_given_m",
        "sigma_i",
        "delta_s_s",
        "delta_s_s_given_m",
        "delta_f_s",
        "delta_f_s_given_m",
        "correlation_drop",
        "step_sigma_i",
        "step_cmi",
        "thermal_defect",
        "memory_drift",
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub config: ProtocolConfig,
    pub steps: usize,
    pub rows: Vec<TimeRow>,
}

impl TimeSeries {
    pub fn last(&self) -> Option<&TimeRow> {
        self.rows.last()
    }
}

pub fn run_protocol(config: &ProtocolConfig) -> Result<TimeSeries> {
    config.validate()?;
    let n_steps = config.steps()?;
    let beta = config.beta;
    let t = 1.0 / beta;
    let initial = config.correlation.state()?;
    let h_initial = QubitHamiltonian::new(config.e_initial);
    let s_s0 = vn_entropy(&initial.reduce(&['S'])?)?;
    let s_sm0 = conditional_entropy(&initial, 'M')?;
    let i0 = mutual_information(&initial, &['S'], &['M'])?;
    let f0 = thermo::free_energy(&initial, h_initial, t)?;
    let fc0 = thermo::conditional_free_energy(&initial, h_initial, t)?;
    let m0 = initial.reduce(&['M'])?;

    let mut state = initial;
    let mut e_s = config.e_initial;
    let (mut wq, mut wc, mut q) = (0.0, 0.0, 0.0);
    let mut rows = Vec::with_capacity(n_steps);
    for n in 0..n_steps {
        let (next, res) = step(&state, e_s, n, config).map_err(|e| CollisionError::Step {
            step: n,
            source: Box::new(e),
        })?;
        wq += res.work_quench;
        wc += res.work_coupling;
        q += res.heat_q_r;
        let h_now = QubitHamiltonian::new(res.e_s_after);
        let s_s = vn_entropy(&next.reduce(&['S'])?)?;
        let s_sm = conditional_entropy(&next, 'M')?;
        let delta_s_s = s_s - s_s0;
        let delta_s_s_given_m = s_sm - s_sm0;
        let sigma_s = delta_s_s + beta * q;
        let sigma_s_given_m = delta_s_s_given_m + beta * q;
        let step_sigma_i = thermo::dissipative_information(&res.record)?;
        let step_cmi = match &res.record.msr_final {
            Some(msr) => Some(conditional_mutual_information(msr, &['M'], &['R'], &['S'])?),
            None => None,
        };
        let thermal = thermal_state(h_now, beta, 'S')?;
        rows.push(TimeRow {
            step: n + 1,
            e_s: res.e_s_after,
            e_r: res.e_r,
            work_quench: wq,
            work_coupling: wc,
            work: wq + wc,
            heat_q_r: q,
            sigma_s,
            sigma_s_given_m,
            sigma_i: sigma_s_given_m - sigma_s,
            delta_s_s,
            delta_s_s_given_m,
            delta_f_s: thermo::free_energy(&next, h_now, t)? - f0,
            delta_f_s_given_m: thermo::conditional_free_energy(&next, h_now, t)? - fc0,
            correlation_drop: i0 - mutual_information(&next, &['S'], &['M'])?,
            step_sigma_i,
            step_cmi,
            thermal_defect: next.reduce(&['S'])?.trace_distance(&thermal)?,
            memory_drift: next.reduce(&['M'])?.trace_distance(&m0)?,
        });
        state = next;
        e_s = res.e_s_after;
    }
    Ok(TimeSeries {
        config: *config,
        steps: n_steps,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densemath::{self, c, pauli_x, pauli_y};
    use crate::infomeasures::binary_entropy;
    use std::f64::consts::FRAC_PI_4;

    /// `exp(-iθG)` for a Hermitian `G` by spectral decomposition.
    fn expm_herm(gen: &CMatrix, theta: f64) -> CMatrix {
        let es = densemath::eigh(gen).unwrap();
        let n = gen.rows();
        CMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| {
                    es.vectors[(i, k)]
                        * c(0.0, -theta * es.values[k]).exp()
                        * es.vectors[(j, k)].conj()
                })
                .sum()
        })
    }

    #[test]
    fn xy_unitary_matches_generator() {
        let gen =
            &densemath::tensor(&pauli_x(), &pauli_y()) - &densemath::tensor(&pauli_y(), &pauli_x());
        for g in [0.0, 0.1, 0.37, FRAC_PI_4, 1.2] {
            let u = xy_unitary(g);
            assert!(u.max_abs_diff(&expm_herm(&gen, g)) < 1e-12);
            assert!(u.unitarity_defect() < 1e-12);
        }
        assert_eq!(xy_unitary(0.0), CMatrix::identity(4));
    }

    #[test]
    fn xy_quarter_turn_swaps_single_excitations() {
        let u = xy_unitary(FRAC_PI_4);
        assert!((u[(1, 2)] - re(1.0)).norm() < 1e-15);
        assert!((u[(2, 1)] + re(1.0)).norm() < 1e-15);
        assert!(u[(1, 1)].norm() < 1e-15 && u[(2, 2)].norm() < 1e-15);
    }

    #[test]
    fn reservoir_energy_matches_population_balance() {
        // after the collision the excited population is c²q + s²r, which must
        // equal the thermal value at the quenched level
        for &(e, de, beta, g) in &[
            (1.0, 0.0045, 1.0, 0.1),
            (0.5, 0.01, 1.0, 0.3),
            (2.0, 0.2, 0.7, 1.0),
        ] {
            let c2 = f64::cos(2.0 * g).powi(2);
            let s2 = f64::sin(2.0 * g).powi(2);
            let q = logistic(-beta * e);
            let target = logistic(-beta * (e - de));
            let r = (target - c2 * q) / s2;
            let oracle = ((1.0 - r) / r).ln() / beta;
            assert!((reservoir_energy(e, de, beta, g).unwrap() - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn reservoir_energy_full_swap_limit() {
        let e = reservoir_energy(0.8, 0.05, 1.3, FRAC_PI_4).unwrap();
        assert!((e - 0.75).abs() < 1e-12);
    }

    #[test]
    fn reservoir_energy_reports_weak_coupling() {
        let err = reservoir_energy(1.0, 0.5, 1.0, 0.01).unwrap_err();
        assert!(matches!(err, CollisionError::ReservoirEnergy { .. }));
        assert!(err.to_string().contains("too weak"));
    }

    #[test]
    fn reservoir_energy_small_quench_limit() {
        // as δE → 0 the reservoir tends to the system level, with no net heat
        let e = 0.9;
        let mut prev = f64::INFINITY;
        for k in 1..6 {
            let de = 10f64.powi(-k);
            let gap = (reservoir_energy(e, de, 1.0, 0.1).unwrap() - e).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn step_keeps_system_thermal_and_records_quench_work() {
        let cfg = ProtocolConfig::reference(CorrelationKind::Classical, 0.0);
        let state = cfg.correlation.state().unwrap();
        let (next, res) = step(&state, 1.0, 0, &cfg).unwrap();
        let thermal = thermal_state(QubitHamiltonian::new(1.0 - cfg.delta_e), 1.0, 'S').unwrap();
        assert!(
            next.reduce(&['S'])
                .unwrap()
                .trace_distance(&thermal)
                .unwrap()
                < 1e-9
        );
        let want = -cfg.delta_e * (-1.0f64).exp() / (1.0 + (-1.0f64).exp());
        assert!((res.work_quench - want).abs() < 1e-14);
        // first law per step
        let de_s = next
            .reduce(&['S'])
            .unwrap()
            .expectation(&QubitHamiltonian::new(res.e_s_after).matrix())
            - state
                .reduce(&['S'])
                .unwrap()
                .expectation(&QubitHamiltonian::new(1.0).matrix());
        assert!((res.record.work_ext - de_s - res.heat_q_r).abs() < 1e-14);
    }

    #[test]
    fn product_initial_never_builds_dissipative_information() {
        let mut cfg = ProtocolConfig::reference(CorrelationKind::Product, 0.0);
        cfg.delta_e = 0.09;
        cfg.g = 0.4;
        let ts = run_protocol(&cfg).unwrap();
        assert_eq!(ts.steps, 10);
        assert!(ts.rows.iter().all(|r| r.sigma_i.abs() < 1e-10));
    }

    #[test]
    fn config_validation() {
        let mut cfg = ProtocolConfig::reference(CorrelationKind::Classical, 0.0);
        assert_eq!(cfg.steps().unwrap(), 200);
        cfg.delta_e = 0.007;
        assert!(cfg.validate().is_err());
        let mut cfg = ProtocolConfig::reference(CorrelationKind::Classical, 0.0);
        cfg.correlation.p = 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = ProtocolConfig::reference(CorrelationKind::Classical, 0.0);
        cfg.g = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn coarse_run_invariants() {
        let mut cfg = ProtocolConfig::reference(CorrelationKind::Quantum, 0.0);
        cfg.delta_e = 0.045;
        cfg.retain_msr = true;
        let ts = run_protocol(&cfg).unwrap();
        let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for r in &ts.rows {
            assert!(r.thermal_defect < 1e-9);
            assert!(r.memory_drift < 1e-10);
            assert!((r.sigma_i - r.correlation_drop).abs() < 1e-9);
            assert!((r.step_sigma_i - r.step_cmi.unwrap()).abs() < 1e-10);
            assert!(r.sigma_s >= prev.0 - 1e-9 && r.sigma_s_given_m >= prev.1 - 1e-9);
            assert!(r.sigma_s >= -1e-9);
            prev = (r.sigma_s, r.sigma_s_given_m);
        }
        assert!(ts.last().unwrap().sigma_i <= 2.0 * binary_entropy(cfg.correlation.p) + 1e-9);
    }
}
