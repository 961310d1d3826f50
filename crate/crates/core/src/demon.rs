//! Qubit Maxwell's demon: a memory qubit correlates with a thermal system
//! through a two-qubit gate and feeds back either coherently (controlled
//! unitaries) or after a projective measurement in its own eigenbasis.
//!
//! Registers are ordered (M, S) throughout this module.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densemath::{self, c, pauli_x, pauli_y, pauli_z, re, CMatrix, MathError};
use crate::infomeasures::{mutual_information, vn_entropy};
use crate::random::{haar_unitary, substream};
use crate::states::{thermal_state, DensityMatrix, QubitHamiltonian, StateError};
use crate::trajectories::qubit_eigenbasis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemonError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error("expected {expected} single-qubit unitaries, got {got}")]
    Locals { expected: usize, got: usize },
}

impl From<crate::trajectories::TrajError> for DemonError {
    fn from(e: crate::trajectories::TrajError) -> Self {
        match e {
            crate::trajectories::TrajError::State(s) => DemonError::State(s),
            crate::trajectories::TrajError::Math(m) => DemonError::Math(m),
            other => DemonError::State(StateError::Parameter(other.to_string())),
        }
    }
}

pub type Result<T> = std::result::Result<T, DemonError>;

const UNITARY_TOL: f64 = 1e-10;

/// Interaction coefficients of the canonical two-qubit decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlocalParams {
    pub c_x: f64,
    pub c_y: f64,
    pub c_z: f64,
}

impl NonlocalParams {
    /// Uniform draw from `[0, π/4]^3`, sorted so that `c_x ≥ c_y ≥ c_z`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let q = std::f64::consts::FRAC_PI_4;
        let mut v = [
            rng.random::<f64>() * q,
            rng.random::<f64>() * q,
            rng.random::<f64>() * q,
        ];
        v.sort_by(|a, b| b.total_cmp(a));
        Self {
            c_x: v[0],
            c_y: v[1],
            c_z: v[2],
        }
    }

    /// Inside `π/4 ≥ c_x ≥ c_y ≥ |c_z|`.
    pub fn in_chamber(&self) -> bool {
        let q = std::f64::consts::FRAC_PI_4 + 1e-15;
        q >= self.c_x && self.c_x >= self.c_y && self.c_y >= self.c_z.abs()
    }
}

/// `exp(i c P⊗P) = cos c · 1 + i sin c · P⊗P` for a Pauli `P`.
fn pauli_rotation(p: &CMatrix, coeff: f64) -> CMatrix {
    let pp = densemath::tensor(p, p);
    &CMatrix::identity(4).scale(re(coeff.cos())) + &pp.scale(c(0.0, coeff.sin()))
}

/// `(u1⊗u2) exp(i Σ c_k σ_k⊗σ_k) (u3⊗u4)`.
pub fn canonical_two_qubit(params: NonlocalParams, locals: &[CMatrix]) -> Result<CMatrix> {
    if locals.len() != 4 {
        return Err(DemonError::Locals {
            expected: 4,
            got: locals.len(),
        });
    }
    for u in locals {
        if u.rows() != 2 {
            return Err(MathError::DimensionMismatch("local gates must be 2x2".into()).into());
        }
        u.ensure_unitary(UNITARY_TOL)?;
    }
    let core = &(&pauli_rotation(&pauli_x(), params.c_x) * &pauli_rotation(&pauli_y(), params.c_y))
        * &pauli_rotation(&pauli_z(), params.c_z);
    let left = densemath::tensor(&locals[0], &locals[1]);
    let right = densemath::tensor(&locals[2], &locals[3]);
    Ok(&(&left * &core) * &right)
}

/// `|0><0|⊗U0 + |1><1|⊗U1` on (M, S): both controlled gates composed.
pub fn unitary_feedback(u0: &CMatrix, u1: &CMatrix) -> Result<CMatrix> {
    for u in [u0, u1] {
        if u.rows() != 2 {
            return Err(MathError::DimensionMismatch("feedback gates must be 2x2".into()).into());
        }
        u.ensure_unitary(UNITARY_TOL)?;
    }
    let p0 = CMatrix::from_diag(&[1.0, 0.0]);
    let p1 = CMatrix::from_diag(&[0.0, 1.0]);
    Ok(&densemath::tensor(&p0, u0) + &densemath::tensor(&p1, u1))
}

/// One measurement branch: outcome `k` with its probability and the
/// post-feedback state of the pair.
#[derive(Clone, Debug)]
pub struct Branch {
    pub outcome: usize,
    pub probability: f64,
    pub state: Option<DensityMatrix>,
}

/// Result of measuring the memory and applying `U^{(k)}` to the system.
#[derive(Clone, Debug)]
pub struct MeasuredFeedback {
    pub branches: Vec<Branch>,
    /// Probability-weighted mixture of the branches.
    pub state: DensityMatrix,
    /// Memory eigenbasis used for the measurement (columns).
    pub basis: CMatrix,
}

/// Measure M (labels M, S) in its eigenbasis, then apply `u0` or `u1` on S.
pub fn measurement_feedback(
    state_ms: &DensityMatrix,
    u0: &CMatrix,
    u1: &CMatrix,
) -> Result<MeasuredFeedback> {
    let state = state_ms.permute(&['M', 'S'])?;
    for u in [u0, u1] {
        u.ensure_unitary(UNITARY_TOL)?;
    }
    let basis = qubit_eigenbasis(&state.reduce(&['M'])?)?;
    let mut mixed = CMatrix::zeros(4, 4);
    let mut branches = Vec::with_capacity(2);
    for (k, u) in [u0, u1].into_iter().enumerate() {
        let proj = densemath::tensor(&CMatrix::outer(&basis.column(k)), u);
        let unnorm = &(&proj * state.matrix()) * &proj.adjoint();
        let prob = unnorm.trace().re;
        mixed = &mixed + &unnorm;
        let branch_state = if prob > 1e-14 {
            Some(DensityMatrix::new(
                unnorm.scale(re(1.0 / prob)),
                &[2, 2],
                &['M', 'S'],
            )?)
        } else {
            None
        };
        branches.push(Branch {
            outcome: k,
            probability: prob.max(0.0),
            state: branch_state,
        });
    }
    Ok(MeasuredFeedback {
        branches,
        state: DensityMatrix::new(mixed, &[2, 2], &['M', 'S'])?,
        basis,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackKind {
    Unitary,
    Measurement,
}

impl FeedbackKind {
    pub fn name(&self) -> &'static str {
        match self {
            FeedbackKind::Unitary => "unitary",
            FeedbackKind::Measurement => "measurement",
        }
    }
}

/// One random feedback operation applied to a pure memory and thermal system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemonRecord {
    pub sample_id: usize,
    pub params: NonlocalParams,
    pub delta_s_s: f64,
    pub mutual_info_final: f64,
    pub memory_entropy_final: f64,
    /// Mutual information after dephasing the memory in its eigenbasis.
    pub dephased_mutual_info_final: f64,
    /// Joint entropy of the final pair (dephased for the measurement kind).
    pub joint_entropy_final: f64,
    pub system_entropy_initial: f64,
    pub feedback_kind: FeedbackKind,
}

impl DemonRecord {
    /// `ΔS_S - (I - S_M + S_SM(t₂) - S_S(t₁))`; zero for every valid record.
    pub fn identity_defect(&self) -> f64 {
        self.delta_s_s
            - (self.mutual_info_final - self.memory_entropy_final + self.joint_entropy_final
                - self.system_entropy_initial)
    }
}

/// `Σ_k (|k><k| ⊗ 1) ρ (|k><k| ⊗ 1)` over the memory eigenbasis.
pub fn dephase_memory(state_ms: &DensityMatrix) -> Result<DensityMatrix> {
    let state = state_ms.permute(&['M', 'S'])?;
    let basis_m = qubit_eigenbasis(&state.reduce(&['M'])?)?;
    let mut out = CMatrix::zeros(4, 4);
    for k in 0..2 {
        let proj = densemath::tensor(&CMatrix::outer(&basis_m.column(k)), &CMatrix::identity(2));
        out = &out + &(&(&proj * state.matrix()) * &proj);
    }
    Ok(DensityMatrix::new(out, &[2, 2], &['M', 'S'])?)
}

fn dephased_mutual_information(state_ms: &DensityMatrix) -> Result<f64> {
    Ok(mutual_information(
        &dephase_memory(state_ms)?,
        &['S'],
        &['M'],
    )?)
}

/// Apply `gate` on (M, S) to `|0><0|_M ⊗ thermal_S(β, E = 1)` and record the
/// entropic bookkeeping for the chosen feedback kind.
pub fn demon_record(
    beta: f64,
    gate: &CMatrix,
    params: NonlocalParams,
    sample_id: usize,
    kind: FeedbackKind,
) -> Result<DemonRecord> {
    let memory = DensityMatrix::diagonal(&[1.0, 0.0], &[2], &['M'])?;
    let system = thermal_state(QubitHamiltonian::new(1.0), beta, 'S')?;
    let initial = memory.tensor(&system)?;
    let s_s0 = vn_entropy(&system)?;
    let evolved = initial.evolve(gate)?;
    let final_state = match kind {
        FeedbackKind::Unitary => evolved,
        FeedbackKind::Measurement => {
            let id = CMatrix::identity(2);
            measurement_feedback(&evolved, &id, &id)?.state
        }
    };
    let s_s = vn_entropy(&final_state.reduce(&['S'])?)?;
    Ok(DemonRecord {
        sample_id,
        params,
        delta_s_s: s_s - s_s0,
        mutual_info_final: mutual_information(&final_state, &['S'], &['M'])?,
        memory_entropy_final: vn_entropy(&final_state.reduce(&['M'])?)?,
        dephased_mutual_info_final: dephased_mutual_information(&final_state)?,
        joint_entropy_final: vn_entropy(&final_state)?,
        system_entropy_initial: s_s0,
        feedback_kind: kind,
    })
}

/// Sample `index` of a scatter run: its own random stream, so samples can
/// be generated in any order or in parallel with identical results.
pub fn demon_sample(beta: f64, seed: u64, index: usize, kind: FeedbackKind) -> Result<DemonRecord> {
    let mut rng = substream(seed, index as u64);
    let params = NonlocalParams::sample(&mut rng);
    let locals: Vec<CMatrix> = (0..4).map(|_| haar_unitary(2, &mut rng)).collect();
    let gate = canonical_two_qubit(params, &locals)?;
    demon_record(beta, &gate, params, index, kind)
}

pub fn demon_scatter(
    beta: f64,
    num_samples: usize,
    seed: u64,
    kind: FeedbackKind,
) -> Result<Vec<DemonRecord>> {
    (0..num_samples)
        .map(|i| demon_sample(beta, seed, i, kind))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng_from_seed;
    use std::f64::consts::FRAC_PI_4;

    fn swap() -> CMatrix {
        CMatrix::from_fn(4, 4, |i, j| {
            let perm = [0, 2, 1, 3];
            if perm[i] == j {
                re(1.0)
            } else {
                re(0.0)
            }
        })
    }

    fn ids() -> Vec<CMatrix> {
        vec![CMatrix::identity(2); 4]
    }

    #[test]
    fn zero_params_give_identity() {
        let p = NonlocalParams {
            c_x: 0.0,
            c_y: 0.0,
            c_z: 0.0,
        };
        assert!(
            canonical_two_qubit(p, &ids())
                .unwrap()
                .max_abs_diff(&CMatrix::identity(4))
                < 1e-15
        );
    }

    #[test]
    fn chamber_corner_is_swap_up_to_phase() {
        let p = NonlocalParams {
            c_x: FRAC_PI_4,
            c_y: FRAC_PI_4,
            c_z: FRAC_PI_4,
        };
        let u = canonical_two_qubit(p, &ids()).unwrap();
        let phase = u[(0, 0)];
        assert!((phase.norm() - 1.0).abs() < 1e-14);
        assert!(u.max_abs_diff(&swap().scale(phase)) < 1e-14);
    }

    #[test]
    fn random_gates_are_unitary_and_sampled_in_chamber() {
        let mut rng = rng_from_seed(9);
        for _ in 0..50 {
            let p = NonlocalParams::sample(&mut rng);
            assert!(p.in_chamber());
            let locals: Vec<CMatrix> = (0..4).map(|_| haar_unitary(2, &mut rng)).collect();
            assert!(canonical_two_qubit(p, &locals).unwrap().unitarity_defect() < 1e-12);
        }
        assert!(canonical_two_qubit(
            NonlocalParams {
                c_x: 0.1,
                c_y: 0.0,
                c_z: 0.0
            },
            &ids()[..3]
        )
        .is_err());
    }

    #[test]
    fn feedback_block_algebra() {
        assert!(
            unitary_feedback(&CMatrix::identity(2), &CMatrix::identity(2))
                .unwrap()
                .max_abs_diff(&CMatrix::identity(4))
                < 1e-15
        );
        // memory 0 flips the system, memory 1 leaves it: p|00> + (1-p)|11>
        // (M, S order) becomes p|01> + (1-p)|11>
        let p = 0.7;
        let rho = DensityMatrix::diagonal(&[p, 0.0, 0.0, 1.0 - p], &[2, 2], &['M', 'S']).unwrap();
        let lam = unitary_feedback(&pauli_x(), &CMatrix::identity(2)).unwrap();
        let out = rho.evolve(&lam).unwrap();
        let want = [0.0, p, 0.0, 1.0 - p];
        for (x, y) in out.populations().iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn measurement_can_be_deferred() {
        let mut rng = rng_from_seed(12);
        let (u0, u1) = (haar_unitary(2, &mut rng), haar_unitary(2, &mut rng));
        let sys = crate::random::random_density(&[2], &['S'], &mut rng);
        let mem = DensityMatrix::diagonal(&[0.35, 0.65], &[2], &['M']).unwrap();
        let ms = mem.tensor(&sys).unwrap();
        let coherent = ms.evolve(&unitary_feedback(&u0, &u1).unwrap()).unwrap();
        let measured = measurement_feedback(&ms, &u0, &u1).unwrap();
        for (x, y) in coherent
            .populations()
            .iter()
            .zip(measured.state.populations())
        {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn measurement_feedback_limits() {
        let mut rng = rng_from_seed(13);
        let u0 = haar_unitary(2, &mut rng);
        let u1 = haar_unitary(2, &mut rng);
        let sys = crate::random::random_density(&[2], &['S'], &mut rng);
        let pure_mem = DensityMatrix::diagonal(&[1.0, 0.0], &[2], &['M'])
            .unwrap()
            .tensor(&sys)
            .unwrap();
        let out = measurement_feedback(&pure_mem, &u0, &u1).unwrap();
        assert!(out.branches[1].state.is_none());
        let want = pure_mem.evolve_on(&u0, &['S']).unwrap();
        assert!(out.state.matrix().max_abs_diff(want.matrix()) < 1e-14);
        let mixed_mem = DensityMatrix::diagonal(&[0.5, 0.5], &[2], &['M'])
            .unwrap()
            .tensor(&sys)
            .unwrap();
        let out = measurement_feedback(&mixed_mem, &u0, &u0).unwrap();
        let want = mixed_mem.evolve_on(&u0, &['S']).unwrap();
        assert!(out.state.matrix().max_abs_diff(want.matrix()) < 1e-14);
    }

    #[test]
    fn measurement_feedback_matches_channel_composition() {
        let mut rng = rng_from_seed(14);
        let rho = crate::random::random_density(&[2, 2], &['M', 'S'], &mut rng);
        let (u0, u1) = (haar_unitary(2, &mut rng), haar_unitary(2, &mut rng));
        let out = measurement_feedback(&rho, &u0, &u1).unwrap();
        // dephase M in its eigenbasis, rotate to that basis, apply the
        // controlled feedback, rotate back
        let v = out.basis.clone();
        let to_eig = densemath::tensor(&v.adjoint(), &CMatrix::identity(2));
        let deph = dephase_memory(&rho).unwrap();
        let in_eig = deph.matrix().conjugate_by(&to_eig);
        let fed = in_eig.conjugate_by(&unitary_feedback(&u0, &u1).unwrap());
        let back = fed.conjugate_by(&to_eig.adjoint());
        assert!(out.state.matrix().max_abs_diff(&back) < 1e-13);
        let total: f64 = out.branches.iter().map(|b| b.probability).sum();
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn swap_gate_purifies_system() {
        let p = NonlocalParams {
            c_x: FRAC_PI_4,
            c_y: FRAC_PI_4,
            c_z: FRAC_PI_4,
        };
        let gate = canonical_two_qubit(p, &ids()).unwrap();
        for beta in [0.0, 2.0] {
            let r = demon_record(beta, &gate, p, 0, FeedbackKind::Unitary).unwrap();
            assert!((r.delta_s_s + r.system_entropy_initial).abs() < 1e-12);
        }
    }

    #[test]
    fn infinite_temperature_never_gains_entropy() {
        for kind in [FeedbackKind::Unitary, FeedbackKind::Measurement] {
            for r in demon_scatter(0.0, 100, 3, kind).unwrap() {
                assert!(r.delta_s_s <= 1e-12);
                assert!(r.identity_defect().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn finite_temperature_shows_both_signs() {
        let recs = demon_scatter(2.0, 400, 5, FeedbackKind::Unitary).unwrap();
        assert!(recs.iter().any(|r| r.delta_s_s > 1e-6));
        assert!(recs.iter().any(|r| r.delta_s_s < -1e-6));
        for r in &recs {
            assert!((r.delta_s_s - (r.mutual_info_final - r.memory_entropy_final)).abs() < 1e-9);
            assert!(r.delta_s_s <= 2f64.ln() - r.system_entropy_initial + 1e-12);
        }
    }

    #[test]
    fn scatter_is_reproducible() {
        let a = demon_scatter(2.0, 10, 77, FeedbackKind::Measurement).unwrap();
        let b = demon_scatter(2.0, 10, 77, FeedbackKind::Measurement).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert!((r.mutual_info_final - r.dephased_mutual_info_final).abs() < 1e-10);
        }
    }
}
