//! Two-point-measurement trajectory statistics for a system-memory pair
//! colliding with one thermal reservoir qubit.
//!
//! Two schemes are enumerated exactly:
//!
//! * global: the system-memory pair is measured in the eigenbasis of its
//!   joint state before (`n`) and after (`n'`) the collision, the reservoir
//!   in its energy basis (`r`, `r'`);
//! * local: the system is measured in the eigenbasis of its marginal (`a`,
//!   `a'`), the memory once in the eigenbasis of its marginal (`b`), and the
//!   reservoir in its energy basis.
//!
//! The backward process starts from `ρ_SM^f ⊗ ρ_R^i` and runs `U†`.
//!
//! Every quantity is derived from a [`GlobalTables`] or [`LocalTables`]
//! value holding populations and transition probabilities. The exact tables
//! come from [`TwoPointProcess`]; the emulator fills the same tables with
//! shot estimates and reuses the fluctuation-theorem machinery unchanged.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densemath::{self, tensor_vec, CMatrix, MathError, C64};
use crate::infomeasures::{shannon, vn_entropy};
use crate::states::{basis_ket, thermal_state, DensityMatrix, QubitHamiltonian, StateError};

/// Forward probabilities below this are treated as unrealized.
pub const SUPPORT_TOL: f64 = 1e-15;

/// Stochastic values closer than this share a detailed-FT bin.
pub const BIN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("{kind:?} is not defined for the {scheme:?} scheme")]
    SchemeMismatch {
        kind: FunctionalKind,
        scheme: Scheme,
    },
    #[error("distribution and functional disagree: {0}")]
    Mismatch(String),
    #[error("supplied basis does not diagonalize the state (off-diagonal {0:.3e})")]
    NotEigenbasis(f64),
}

pub type Result<T> = std::result::Result<T, TrajError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Global,
    Local,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GlobalOutcome {
    pub n: usize,
    pub r: usize,
    pub n_prime: usize,
    pub r_prime: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LocalOutcome {
    pub a: usize,
    pub b: usize,
    pub r: usize,
    pub a_prime: usize,
    pub r_prime: usize,
}

impl LocalOutcome {
    /// The system-reservoir part `(a, r, a', r')`.
    pub fn sr(&self) -> SrKey {
        SrKey {
            a: self.a,
            r: self.r,
            a_prime: self.a_prime,
            r_prime: self.r_prime,
        }
    }
}

/// System-reservoir trajectory `(a, r, a', r')` with the memory marginalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SrKey {
    pub a: usize,
    pub r: usize,
    pub a_prime: usize,
    pub r_prime: usize,
}

impl SrKey {
    pub fn label(&self) -> String {
        format!("{}{}{}{}", self.a, self.r, self.a_prime, self.r_prime)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome {
    Global(GlobalOutcome),
    Local(LocalOutcome),
}

impl Outcome {
    /// Compact digit label: `n r n' r'` or `a b r a' r'`.
    pub fn label(&self) -> String {
        match self {
            Outcome::Global(o) => format!("{}{}{}{}", o.n, o.r, o.n_prime, o.r_prime),
            Outcome::Local(o) => format!("{}{}{}{}{}", o.a, o.b, o.r, o.a_prime, o.r_prime),
        }
    }

    pub fn memory(&self) -> Option<usize> {
        match self {
            Outcome::Local(o) => Some(o.b),
            Outcome::Global(_) => None,
        }
    }

    pub fn sr(&self) -> Option<SrKey> {
        match self {
            Outcome::Local(o) => Some(o.sr()),
            Outcome::Global(_) => None,
        }
    }
}

/// Probabilities over a fully enumerated outcome space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDistribution {
    pub direction: Direction,
    pub scheme: Scheme,
    pub outcomes: Vec<Outcome>,
    pub probs: Vec<f64>,
}

impl TrajectoryDistribution {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Outcome, f64)> {
        self.outcomes.iter().zip(self.probs.iter().copied())
    }

    /// Outcome label to probability, for serialization.
    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.iter().map(|(o, p)| (o.label(), p)).collect()
    }

    /// Memory-marginalized system-reservoir distribution (local scheme only).
    pub fn sr_marginal(&self) -> BTreeMap<SrKey, f64> {
        let mut m = BTreeMap::new();
        for (o, p) in self.iter() {
            if let Some(k) = o.sr() {
                *m.entry(k).or_insert(0.0) += p;
            }
        }
        m
    }

    /// Memory marginal `b -> P(b)` (local scheme only).
    pub fn memory_marginal(&self) -> BTreeMap<usize, f64> {
        let mut m = BTreeMap::new();
        for (o, p) in self.iter() {
            if let Some(b) = o.memory() {
                *m.entry(b).or_insert(0.0) += p;
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    /// `ln(P_n P_r) - ln(P̃_{n'} P_{r'})`.
    SigmaSGivenMGlobal,
    /// Unconditional entropy production of the system.
    SigmaS,
    /// `σ_{S|M} - σ_S` in the global scheme.
    SigmaIGlobal,
    /// `ln(P_{ab} P_r / P_b) - ln(P̃_{a'b} P_{r'} / P_b)`.
    SigmaSGivenMLocal,
    /// `ln(P_{ab}/P_a) - ln(P̃_{a'b}/P̃_{a'})`.
    SigmaILocal,
}

impl FunctionalKind {
    pub fn admits(&self, scheme: Scheme) -> bool {
        match self {
            FunctionalKind::SigmaS => true,
            FunctionalKind::SigmaSGivenMGlobal | FunctionalKind::SigmaIGlobal => {
                scheme == Scheme::Global
            }
            FunctionalKind::SigmaSGivenMLocal | FunctionalKind::SigmaILocal => {
                scheme == Scheme::Local
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FunctionalKind::SigmaSGivenMGlobal => "sigma_s_given_m_global",
            FunctionalKind::SigmaS => "sigma_s",
            FunctionalKind::SigmaIGlobal => "sigma_i_global",
            FunctionalKind::SigmaSGivenMLocal => "sigma_s_given_m_local",
            FunctionalKind::SigmaILocal => "sigma_i_local",
        }
    }
}

/// Per-outcome stochastic values aligned with a distribution's outcomes;
/// `None` marks outcomes excluded because a logarithm is undefined or the
/// forward probability vanishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticFunctional {
    pub kind: FunctionalKind,
    pub scheme: Scheme,
    pub values: Vec<Option<f64>>,
}

impl StochasticFunctional {
    pub fn excluded(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }
}

fn ln_ratio(num: f64, den: f64) -> Option<f64> {
    let v = num.ln() - den.ln();
    (num > 0.0 && den > 0.0 && v.is_finite()).then_some(v)
}

fn mask_support(values: Vec<Option<f64>>, fwd: &TrajectoryDistribution) -> Vec<Option<f64>> {
    values
        .into_iter()
        .zip(&fwd.probs)
        .map(|(v, &p)| if p < SUPPORT_TOL { None } else { v })
        .collect()
}

/// Populations and transition probabilities of the local scheme, all in
/// local product bases. Transition tables are indexed by `2a + r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalTables {
    /// `P_{ab}` indexed `[a][b]`.
    pub p_ab: [[f64; 2]; 2],
    /// `P̃_{a'b}` indexed `[a'][b]`.
    pub p_ab_final: [[f64; 2]; 2],
    pub p_r: [f64; 2],
    /// Reservoir populations of the backward reference state.
    pub p_r_final: [f64; 2],
    /// `|<a' r'|U|a r>|^2` indexed `[2a + r][2a' + r']`.
    pub t_forward: [[f64; 4]; 4],
    /// `|<a r|U†|a' r'>|^2` indexed `[2a' + r'][2a + r]`.
    pub t_backward: [[f64; 4]; 4],
}

impl LocalTables {
    pub fn p_a(&self) -> [f64; 2] {
        [
            self.p_ab[0][0] + self.p_ab[0][1],
            self.p_ab[1][0] + self.p_ab[1][1],
        ]
    }

    pub fn p_b(&self) -> [f64; 2] {
        [
            self.p_ab[0][0] + self.p_ab[1][0],
            self.p_ab[0][1] + self.p_ab[1][1],
        ]
    }

    pub fn p_a_final(&self) -> [f64; 2] {
        [
            self.p_ab_final[0][0] + self.p_ab_final[0][1],
            self.p_ab_final[1][0] + self.p_ab_final[1][1],
        ]
    }

    pub fn p_b_final(&self) -> [f64; 2] {
        [
            self.p_ab_final[0][0] + self.p_ab_final[1][0],
            self.p_ab_final[0][1] + self.p_ab_final[1][1],
        ]
    }

    pub fn outcomes() -> Vec<Outcome> {
        let mut v = Vec::with_capacity(32);
        for a in 0..2 {
            for b in 0..2 {
                for r in 0..2 {
                    for a_prime in 0..2 {
                        for r_prime in 0..2 {
                            v.push(Outcome::Local(LocalOutcome {
                                a,
                                b,
                                r,
                                a_prime,
                                r_prime,
                            }));
                        }
                    }
                }
            }
        }
        v
    }

    fn local(o: &Outcome) -> LocalOutcome {
        match o {
            Outcome::Local(l) => *l,
            Outcome::Global(_) => unreachable!("local tables only enumerate local outcomes"),
        }
    }

    pub fn forward(&self) -> TrajectoryDistribution {
        let outcomes = Self::outcomes();
        let probs = outcomes
            .iter()
            .map(|o| {
                let l = Self::local(o);
                self.t_forward[2 * l.a + l.r][2 * l.a_prime + l.r_prime]
                    * self.p_ab[l.a][l.b]
                    * self.p_r[l.r]
            })
            .collect();
        TrajectoryDistribution {
            direction: Direction::Forward,
            scheme: Scheme::Local,
            outcomes,
            probs,
        }
    }

    pub fn backward(&self) -> TrajectoryDistribution {
        let outcomes = Self::outcomes();
        let probs = outcomes
            .iter()
            .map(|o| {
                let l = Self::local(o);
                self.t_backward[2 * l.a_prime + l.r_prime][2 * l.a + l.r]
                    * self.p_ab_final[l.a_prime][l.b]
                    * self.p_r_final[l.r_prime]
            })
            .collect();
        TrajectoryDistribution {
            direction: Direction::Backward,
            scheme: Scheme::Local,
            outcomes,
            probs,
        }
    }

    pub fn functional(&self, kind: FunctionalKind) -> Result<StochasticFunctional> {
        if !kind.admits(Scheme::Local) {
            return Err(TrajError::SchemeMismatch {
                kind,
                scheme: Scheme::Local,
            });
        }
        let (p_a, p_b, p_af) = (self.p_a(), self.p_b(), self.p_a_final());
        let fwd = self.forward();
        let values = fwd
            .outcomes
            .iter()
            .map(|o| {
                let l = Self::local(o);
                let (pab, pabf) = (self.p_ab[l.a][l.b], self.p_ab_final[l.a_prime][l.b]);
                let heat = ln_ratio(self.p_r[l.r], self.p_r_final[l.r_prime]);
                match kind {
                    FunctionalKind::SigmaS => Some(ln_ratio(p_a[l.a], p_af[l.a_prime])? + heat?),
                    FunctionalKind::SigmaSGivenMLocal => {
                        Some(ln_ratio(pab / p_b[l.b], pabf / p_b[l.b])? + heat?)
                    }
                    FunctionalKind::SigmaILocal => {
                        Some(ln_ratio(pab, p_a[l.a])? - ln_ratio(pabf, p_af[l.a_prime])?)
                    }
                    _ => unreachable!("scheme checked above"),
                }
            })
            .collect();
        Ok(StochasticFunctional {
            kind,
            scheme: Scheme::Local,
            values: mask_support(values, &fwd),
        })
    }
}

/// Populations, transitions and system surprisals of the global scheme.
/// Transition tables are indexed by `2n + r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalTables {
    pub p_n: Vec<f64>,
    pub p_n_final: Vec<f64>,
    pub p_r: [f64; 2],
    pub p_r_final: [f64; 2],
    pub t_forward: Vec<Vec<f64>>,
    pub t_backward: Vec<Vec<f64>>,
    /// `-Tr[Tr_M(|n><n|) ln ρ_S^i]`, infinite when `|n>` has weight on a null
    /// direction of `ρ_S^i`.
    pub surprisal_s: Vec<f64>,
    /// Same for `|n'>` against `ρ_S^f`.
    pub surprisal_s_final: Vec<f64>,
}

impl GlobalTables {
    pub fn outcomes(&self) -> Vec<Outcome> {
        let (ni, nf) = (self.p_n.len(), self.p_n_final.len());
        let mut v = Vec::with_capacity(ni * nf * 4);
        for n in 0..ni {
            for r in 0..2 {
                for n_prime in 0..nf {
                    for r_prime in 0..2 {
                        v.push(Outcome::Global(GlobalOutcome {
                            n,
                            r,
                            n_prime,
                            r_prime,
                        }));
                    }
                }
            }
        }
        v
    }

    fn global(o: &Outcome) -> GlobalOutcome {
        match o {
            Outcome::Global(g) => *g,
            Outcome::Local(_) => unreachable!("global tables only enumerate global outcomes"),
        }
    }

    pub fn forward(&self) -> TrajectoryDistribution {
        let outcomes = self.outcomes();
        let probs = outcomes
            .iter()
            .map(|o| {
                let g = Self::global(o);
                self.t_forward[2 * g.n + g.r][2 * g.n_prime + g.r_prime]
                    * self.p_n[g.n]
                    * self.p_r[g.r]
            })
            .collect();
        TrajectoryDistribution {
            direction: Direction::Forward,
            scheme: Scheme::Global,
            outcomes,
            probs,
        }
    }

    pub fn backward(&self) -> TrajectoryDistribution {
        let outcomes = self.outcomes();
        let probs = outcomes
            .iter()
            .map(|o| {
                let g = Self::global(o);
                self.t_backward[2 * g.n_prime + g.r_prime][2 * g.n + g.r]
                    * self.p_n_final[g.n_prime]
                    * self.p_r_final[g.r_prime]
            })
            .collect();
        TrajectoryDistribution {
            direction: Direction::Backward,
            scheme: Scheme::Global,
            outcomes,
            probs,
        }
    }

    pub fn functional(&self, kind: FunctionalKind) -> Result<StochasticFunctional> {
        if !kind.admits(Scheme::Global) {
            return Err(TrajError::SchemeMismatch {
                kind,
                scheme: Scheme::Global,
            });
        }
        let fwd = self.forward();
        let values = fwd
            .outcomes
            .iter()
            .map(|o| {
                let g = Self::global(o);
                let heat = ln_ratio(self.p_r[g.r], self.p_r_final[g.r_prime]);
                let cond = || Some(ln_ratio(self.p_n[g.n], self.p_n_final[g.n_prime])? + heat?);
                let uncond = || {
                    let v = self.surprisal_s_final[g.n_prime] - self.surprisal_s[g.n] + heat?;
                    v.is_finite().then_some(v)
                };
                match kind {
                    FunctionalKind::SigmaSGivenMGlobal => cond(),
                    FunctionalKind::SigmaS => uncond(),
                    FunctionalKind::SigmaIGlobal => Some(cond()? - uncond()?),
                    _ => unreachable!("scheme checked above"),
                }
            })
            .collect();
        Ok(StochasticFunctional {
            kind,
            scheme: Scheme::Global,
            values: mask_support(values, &fwd),
        })
    }
}

/// Exact description of one collision `U_SR` acting on `ρ_SM^i ⊗ ρ_R^i`.
#[derive(Clone, Debug)]
pub struct TwoPointProcess {
    pub beta: f64,
    pub h_r: QubitHamiltonian,
    pub u_sr: CMatrix,
    pub rho_sm_initial: DensityMatrix,
    pub rho_sm_final: DensityMatrix,
    pub rho_r: DensityMatrix,
    pub heat_q_r: f64,
    /// Eigenbases (columns) used for the measurements.
    pub basis_sm_initial: CMatrix,
    pub basis_sm_final: CMatrix,
    pub basis_s_initial: CMatrix,
    pub basis_m: CMatrix,
    pub basis_s_final: CMatrix,
    joint: CMatrix,
}

fn clamp_probs(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

impl TwoPointProcess {
    /// `rho_sm` must carry labels S and M (any order); it is reordered to (S, M).
    pub fn new(
        rho_sm: &DensityMatrix,
        h_r: QubitHamiltonian,
        beta: f64,
        u_sr: &CMatrix,
    ) -> Result<Self> {
        let rho_sm = rho_sm.permute(&['S', 'M'])?;
        u_sr.ensure_unitary(1e-10)?;
        let rho_r = thermal_state(h_r, beta, 'R')?;
        let joint = densemath::embed(u_sr, &[0, 2], &[2, 2, 2])?;
        let full = rho_sm.tensor(&rho_r)?.evolve(&joint)?;
        let rho_sm_final = full.reduce(&['S', 'M'])?;
        let rho_r_final = full.reduce(&['R'])?;
        let heat_q_r = rho_r_final.expectation(&h_r.matrix()) - rho_r.expectation(&h_r.matrix());
        let basis_sm_initial = rho_sm.eigen()?.vectors;
        let basis_sm_final = rho_sm_final.eigen()?.vectors;
        let basis_s_initial = qubit_eigenbasis(&rho_sm.reduce(&['S'])?)?;
        let basis_m = qubit_eigenbasis(&rho_sm.reduce(&['M'])?)?;
        let basis_s_final = qubit_eigenbasis(&rho_sm_final.reduce(&['S'])?)?;
        Ok(Self {
            beta,
            h_r,
            u_sr: u_sr.clone(),
            rho_sm_initial: rho_sm,
            rho_sm_final,
            rho_r,
            heat_q_r,
            basis_sm_initial,
            basis_sm_final,
            basis_s_initial,
            basis_m,
            basis_s_final,
            joint,
        })
    }

    /// Replace the initial joint eigenbasis, e.g. to pick a different basis
    /// inside a degenerate eigenspace.
    pub fn with_initial_sm_basis(mut self, basis: CMatrix) -> Result<Self> {
        let d = self.rho_sm_initial.matrix().conjugate_by(&basis.adjoint());
        let off = off_diagonal_max(&d);
        if densemath::orthonormality_defect(&basis) > 1e-10 || off > 1e-10 {
            return Err(TrajError::NotEigenbasis(off));
        }
        self.basis_sm_initial = basis;
        Ok(self)
    }

    fn sm_in(&self, k: usize) -> Vec<C64> {
        self.basis_sm_initial.column(k)
    }

    fn local_ket(&self, s_basis: &CMatrix, a: usize, b: usize, r: usize) -> Vec<C64> {
        tensor_vec(
            &tensor_vec(&s_basis.column(a), &self.basis_m.column(b)),
            &basis_ket(2, r),
        )
    }

    fn transition(&self, from: &[C64], to: &[C64]) -> f64 {
        self.joint.sandwich(to, from).norm_sqr()
    }

    pub fn global_tables(&self) -> Result<GlobalTables> {
        let p_n: Vec<f64> =
            clamp_probs(&self.sm_populations(&self.rho_sm_initial, &self.basis_sm_initial));
        let p_n_final: Vec<f64> =
            clamp_probs(&self.sm_populations(&self.rho_sm_final, &self.basis_sm_final));
        let p_r = self.p_r();
        let mut t_forward = vec![vec![0.0; 8]; 8];
        for n in 0..4 {
            for r in 0..2 {
                let ket_in = tensor_vec(&self.sm_in(n), &basis_ket(2, r));
                for np in 0..4 {
                    for rp in 0..2 {
                        let ket_out =
                            tensor_vec(&self.basis_sm_final.column(np), &basis_ket(2, rp));
                        t_forward[2 * n + r][2 * np + rp] = self.transition(&ket_in, &ket_out);
                    }
                }
            }
        }
        let t_backward = (0..8)
            .map(|i| (0..8).map(|j| t_forward[j][i]).collect())
            .collect();
        let surprisal_s = self.surprisals(&self.rho_sm_initial, &self.basis_sm_initial)?;
        let surprisal_s_final = self.surprisals(&self.rho_sm_final, &self.basis_sm_final)?;
        Ok(GlobalTables {
            p_n,
            p_n_final,
            p_r,
            p_r_final: p_r,
            t_forward,
            t_backward,
            surprisal_s,
            surprisal_s_final,
        })
    }

    pub fn local_tables(&self) -> Result<LocalTables> {
        let mut p_ab = [[0.0; 2]; 2];
        let mut p_ab_final = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let v = tensor_vec(&self.basis_s_initial.column(a), &self.basis_m.column(b));
                p_ab[a][b] = self.rho_sm_initial.matrix().sandwich(&v, &v).re.max(0.0);
                let w = tensor_vec(&self.basis_s_final.column(a), &self.basis_m.column(b));
                p_ab_final[a][b] = self.rho_sm_final.matrix().sandwich(&w, &w).re.max(0.0);
            }
        }
        // M is untouched, so the transition does not depend on b; b = 0 is used
        let mut t_forward = [[0.0; 4]; 4];
        for a in 0..2 {
            for r in 0..2 {
                let ket_in = self.local_ket(&self.basis_s_initial, a, 0, r);
                for ap in 0..2 {
                    for rp in 0..2 {
                        let ket_out = self.local_ket(&self.basis_s_final, ap, 0, rp);
                        t_forward[2 * a + r][2 * ap + rp] = self.transition(&ket_in, &ket_out);
                    }
                }
            }
        }
        let mut t_backward = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                t_backward[j][i] = t_forward[i][j];
            }
        }
        let p_r = self.p_r();
        Ok(LocalTables {
            p_ab,
            p_ab_final,
            p_r,
            p_r_final: p_r,
            t_forward,
            t_backward,
        })
    }

    pub fn tables_for(&self, scheme: Scheme) -> Result<Tables> {
        Ok(match scheme {
            Scheme::Global => Tables::Global(self.global_tables()?),
            Scheme::Local => Tables::Local(self.local_tables()?),
        })
    }

    fn p_r(&self) -> [f64; 2] {
        let p = self.rho_r.populations();
        [p[0], p[1]]
    }

    fn sm_populations(&self, rho: &DensityMatrix, basis: &CMatrix) -> Vec<f64> {
        (0..4)
            .map(|k| {
                let v = basis.column(k);
                rho.matrix().sandwich(&v, &v).re
            })
            .collect()
    }

    /// `-Σ_a <a|Tr_M(|n><n|)|a> ln λ_a` for every joint eigenvector `n`.
    fn surprisals(&self, rho_sm: &DensityMatrix, basis: &CMatrix) -> Result<Vec<f64>> {
        let es = rho_sm.reduce(&['S'])?.eigen()?;
        (0..4)
            .map(|k| {
                let proj = CMatrix::outer(&basis.column(k));
                let red = densemath::partial_trace(&proj, &[2, 2], &[0])?;
                let mut s = 0.0;
                for a in 0..2 {
                    let va = es.vector(a);
                    let w = red.sandwich(&va, &va).re;
                    if w > 1e-14 {
                        s -= w * if es.values[a] > 0.0 {
                            es.values[a].ln()
                        } else {
                            f64::NEG_INFINITY
                        };
                    }
                }
                Ok(s)
            })
            .collect()
    }

    pub fn forward(&self, scheme: Scheme) -> Result<TrajectoryDistribution> {
        Ok(self.tables_for(scheme)?.forward())
    }

    pub fn backward(&self, scheme: Scheme) -> Result<TrajectoryDistribution> {
        Ok(self.tables_for(scheme)?.backward())
    }

    /// Ensemble entropy productions of this collision.
    pub fn ensemble(&self) -> Result<Ensemble> {
        let bq = self.beta * self.heat_q_r;
        let s = |r: &DensityMatrix, l: &[char]| -> Result<f64> { Ok(vn_entropy(&r.reduce(l)?)?) };
        let (i, f) = (&self.rho_sm_initial, &self.rho_sm_final);
        let sigma_s = s(f, &['S'])? - s(i, &['S'])? + bq;
        let d_cond = (s(f, &['S', 'M'])? - s(f, &['M'])?) - (s(i, &['S', 'M'])? - s(i, &['M'])?);
        let sigma_s_given_m = d_cond + bq;
        let j_i = coherence_in(i, &self.basis_s_initial, &self.basis_m)?;
        let j_f = coherence_in(f, &self.basis_s_final, &self.basis_m)?;
        let lt = self.local_tables()?;
        let h_i = shannon(&lt.p_ab.iter().flatten().copied().collect::<Vec<_>>());
        let h_f = shannon(&lt.p_ab_final.iter().flatten().copied().collect::<Vec<_>>());
        Ok(Ensemble {
            sigma_s,
            sigma_s_given_m,
            sigma_i: sigma_s_given_m - sigma_s,
            dephased_entropy_change_plus_heat: h_f - h_i + bq,
            delta_j: j_f - j_i,
        })
    }
}

/// Eigenbasis of a qubit state with columns ordered so that column 0 has the
/// larger overlap with `|0>`; a diagonal state therefore yields the
/// computational basis and local outcome labels coincide with bit values.
pub fn qubit_eigenbasis(rho: &DensityMatrix) -> Result<CMatrix> {
    let v = rho.eigen()?.vectors;
    if v.rows() == 2 && v[(0, 0)].norm() < v[(0, 1)].norm() - 1e-12 {
        return Ok(CMatrix::from_fn(2, 2, |i, j| v[(i, 1 - j)]));
    }
    Ok(v)
}

fn off_diagonal_max(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if i != j {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    worst
}

/// `J = S(ρ dephased in the local basis a⊗b) - S(ρ)` on (S, M).
pub fn coherence_in(rho_sm: &DensityMatrix, basis_s: &CMatrix, basis_m: &CMatrix) -> Result<f64> {
    let basis = densemath::tensor(basis_s, basis_m);
    Ok(crate::infomeasures::coherence_j(rho_sm, &basis)?)
}

/// Either scheme's tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Tables {
    Global(GlobalTables),
    Local(LocalTables),
}

impl Tables {
    pub fn forward(&self) -> TrajectoryDistribution {
        match self {
            Tables::Global(t) => t.forward(),
            Tables::Local(t) => t.forward(),
        }
    }

    pub fn backward(&self) -> TrajectoryDistribution {
        match self {
            Tables::Global(t) => t.backward(),
            Tables::Local(t) => t.backward(),
        }
    }

    pub fn functional(&self, kind: FunctionalKind) -> Result<StochasticFunctional> {
        match self {
            Tables::Global(t) => t.functional(kind),
            Tables::Local(t) => t.functional(kind),
        }
    }
}

pub fn forward_distribution(
    process: &TwoPointProcess,
    scheme: Scheme,
) -> Result<TrajectoryDistribution> {
    process.forward(scheme)
}

pub fn backward_distribution(
    process: &TwoPointProcess,
    scheme: Scheme,
) -> Result<TrajectoryDistribution> {
    process.backward(scheme)
}

pub fn stochastic_values(
    process: &TwoPointProcess,
    kind: FunctionalKind,
    scheme: Scheme,
) -> Result<StochasticFunctional> {
    process.tables_for(scheme)?.functional(kind)
}

fn check_pair(dist: &TrajectoryDistribution, f: &StochasticFunctional) -> Result<()> {
    if dist.scheme != f.scheme {
        return Err(TrajError::SchemeMismatch {
            kind: f.kind,
            scheme: dist.scheme,
        });
    }
    if dist.outcomes.len() != f.values.len() {
        return Err(TrajError::Mismatch(format!(
            "{} outcomes vs {} values",
            dist.outcomes.len(),
            f.values.len()
        )));
    }
    Ok(())
}

/// `Σ_γ P[γ] e^{-σ(γ)}` over outcomes where `σ` is defined.
pub fn ift(dist: &TrajectoryDistribution, f: &StochasticFunctional) -> Result<f64> {
    check_pair(dist, f)?;
    Ok(dist
        .probs
        .iter()
        .zip(&f.values)
        .filter_map(|(p, v)| v.map(|s| p * (-s).exp()))
        .sum())
}

/// `Σ_γ P[γ] σ(γ)` over outcomes where `σ` is defined.
pub fn average(dist: &TrajectoryDistribution, f: &StochasticFunctional) -> Result<f64> {
    check_pair(dist, f)?;
    Ok(dist
        .probs
        .iter()
        .zip(&f.values)
        .filter_map(|(p, v)| v.map(|s| p * s))
        .sum())
}

/// Integral FT conditioned on each memory outcome `b`, normalized by `P(b)`.
pub fn ift_by_memory(
    dist: &TrajectoryDistribution,
    f: &StochasticFunctional,
) -> Result<BTreeMap<usize, f64>> {
    conditioned_ift(dist, f, |o| o.memory())
}

/// Integral FT conditioned on each system-reservoir trajectory, normalized by
/// its memory-marginalized probability.
pub fn ift_by_system_reservoir(
    dist: &TrajectoryDistribution,
    f: &StochasticFunctional,
) -> Result<BTreeMap<SrKey, f64>> {
    conditioned_ift(dist, f, |o| o.sr())
}

fn conditioned_ift<K: Ord + Copy>(
    dist: &TrajectoryDistribution,
    f: &StochasticFunctional,
    key: impl Fn(&Outcome) -> Option<K>,
) -> Result<BTreeMap<K, f64>> {
    check_pair(dist, f)?;
    if dist.scheme != Scheme::Local {
        return Err(TrajError::Mismatch(
            "conditioning requires the local scheme".into(),
        ));
    }
    let mut num: BTreeMap<K, f64> = BTreeMap::new();
    let mut den: BTreeMap<K, f64> = BTreeMap::new();
    for ((o, p), v) in dist.iter().zip(&f.values) {
        let k = key(o).expect("local outcomes carry every key");
        *den.entry(k).or_insert(0.0) += p;
        if let Some(s) = v {
            *num.entry(k).or_insert(0.0) += p * (-s).exp();
        }
    }
    Ok(den
        .into_iter()
        .filter(|(_, d)| *d > SUPPORT_TOL)
        .map(|(k, d)| (k, num.get(&k).copied().unwrap_or(0.0) / d))
        .collect())
}

/// Ensemble entropy quantities a trajectory average is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub sigma_s: f64,
    pub sigma_s_given_m: f64,
    pub sigma_i: f64,
    /// `H(P̃_{a'b}) - H(P_{ab}) + β Q_R`.
    pub dephased_entropy_change_plus_heat: f64,
    /// `J(t_f) - J(t_i)`.
    pub delta_j: f64,
}

/// Trajectory averages next to their ensemble counterparts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragesReport {
    pub avg_sigma_s_given_m_global: f64,
    pub avg_sigma_s_global: f64,
    pub avg_sigma_s_local: f64,
    pub avg_sigma_s_given_m_local: f64,
    pub avg_sigma_i_local: f64,
    pub ensemble: Ensemble,
    pub global_conditional_ok: bool,
    pub unconditional_ok: bool,
    pub local_conditional_ok: bool,
    pub coherence_relation_ok: bool,
}

impl AveragesReport {
    pub const TOL: f64 = 1e-9;

    pub fn all_ok(&self) -> bool {
        self.global_conditional_ok
            && self.unconditional_ok
            && self.local_conditional_ok
            && self.coherence_relation_ok
    }

    /// `⟨σ̃_I⟩ - ΔJ - Σ_I`.
    pub fn coherence_defect(&self) -> f64 {
        self.avg_sigma_i_local - self.ensemble.delta_j - self.ensemble.sigma_i
    }
}

pub fn averages_report(process: &TwoPointProcess) -> Result<AveragesReport> {
    let g = process.global_tables()?;
    let l = process.local_tables()?;
    let (gf, lf) = (g.forward(), l.forward());
    let avg = |d: &TrajectoryDistribution, t: &Tables, k| -> Result<f64> {
        average(d, &t.functional(k)?)
    };
    let (gt, lt) = (Tables::Global(g), Tables::Local(l));
    let avg_sigma_s_given_m_global = avg(&gf, &gt, FunctionalKind::SigmaSGivenMGlobal)?;
    let avg_sigma_s_global = avg(&gf, &gt, FunctionalKind::SigmaS)?;
    let avg_sigma_s_local = avg(&lf, &lt, FunctionalKind::SigmaS)?;
    let avg_sigma_s_given_m_local = avg(&lf, &lt, FunctionalKind::SigmaSGivenMLocal)?;
    let avg_sigma_i_local = avg(&lf, &lt, FunctionalKind::SigmaILocal)?;
    let e = process.ensemble()?;
    let close = |a: f64, b: f64| (a - b).abs() <= AveragesReport::TOL;
    Ok(AveragesReport {
        avg_sigma_s_given_m_global,
        avg_sigma_s_global,
        avg_sigma_s_local,
        avg_sigma_s_given_m_local,
        avg_sigma_i_local,
        ensemble: e,
        global_conditional_ok: close(avg_sigma_s_given_m_global, e.sigma_s_given_m),
        unconditional_ok: close(avg_sigma_s_global, e.sigma_s)
            && close(avg_sigma_s_local, e.sigma_s),
        local_conditional_ok: close(
            avg_sigma_s_given_m_local,
            e.dephased_entropy_change_plus_heat,
        ),
        coherence_relation_ok: close(e.sigma_i, avg_sigma_i_local - e.delta_j),
    })
}

/// How outcomes are grouped before comparing forward and backward statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    None,
    Memory,
    SystemReservoir,
}

/// One `σ` bin: `P_F(σ)`, `P_B(-σ)` and their log-ratio.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DftPoint {
    pub condition: String,
    pub sigma: f64,
    pub p_forward: f64,
    pub p_backward: f64,
    pub log_ratio: Option<f64>,
    /// Outcome labels pooled into this bin.
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetailedFt {
    pub kind: FunctionalKind,
    pub conditioning: Conditioning,
    /// Bins with both probabilities positive.
    pub points: Vec<DftPoint>,
    /// Bins where one side vanished; no ratio is formed.
    pub empty: Vec<DftPoint>,
}

impl DetailedFt {
    /// `max |ln[P_F(σ)/P_B(-σ)] - σ|` over populated bins.
    pub fn max_deviation(&self) -> f64 {
        self.points
            .iter()
            .filter_map(|p| p.log_ratio.map(|r| (r - p.sigma).abs()))
            .fold(0.0, f64::max)
    }
}

/// Bin forward and backward probabilities by `σ` within each condition.
///
/// Within a condition the forward weight of an outcome is divided by the
/// forward probability of the condition and the backward weight by the
/// backward probability of the same condition.
pub fn detailed_ft(
    fwd: &TrajectoryDistribution,
    bwd: &TrajectoryDistribution,
    f: &StochasticFunctional,
    conditioning: Conditioning,
) -> Result<DetailedFt> {
    check_pair(fwd, f)?;
    if bwd.outcomes != fwd.outcomes {
        return Err(TrajError::Mismatch(
            "forward and backward outcome spaces differ".into(),
        ));
    }
    if conditioning != Conditioning::None && fwd.scheme != Scheme::Local {
        return Err(TrajError::Mismatch(
            "conditioning requires the local scheme".into(),
        ));
    }
    let cond_label = |o: &Outcome| -> String {
        match conditioning {
            Conditioning::None => String::new(),
            Conditioning::Memory => format!("b={}", o.memory().unwrap_or(0)),
            Conditioning::SystemReservoir => {
                format!("sr={}", o.sr().map(|k| k.label()).unwrap_or_default())
            }
        }
    };
    let mut norm_f: BTreeMap<String, f64> = BTreeMap::new();
    let mut norm_b: BTreeMap<String, f64> = BTreeMap::new();
    for (i, o) in fwd.outcomes.iter().enumerate() {
        *norm_f.entry(cond_label(o)).or_insert(0.0) += fwd.probs[i];
        *norm_b.entry(cond_label(o)).or_insert(0.0) += bwd.probs[i];
    }
    let mut groups: BTreeMap<String, Vec<(f64, f64, f64, String)>> = BTreeMap::new();
    for (i, o) in fwd.outcomes.iter().enumerate() {
        let Some(s) = f.values[i] else { continue };
        let c = cond_label(o);
        let nf = norm_f[&c];
        let nb = norm_b[&c];
        let pf = if nf > 0.0 { fwd.probs[i] / nf } else { 0.0 };
        let pb = if nb > 0.0 { bwd.probs[i] / nb } else { 0.0 };
        groups.entry(c).or_default().push((s, pf, pb, o.label()));
    }
    let mut points = Vec::new();
    let mut empty = Vec::new();
    for (c, mut items) in groups {
        items.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut bins: Vec<DftPoint> = Vec::new();
        for (s, pf, pb, label) in items {
            match bins.last_mut() {
                Some(bin) if (s - bin.sigma).abs() <= BIN_TOL * (1.0 + s.abs()) => {
                    bin.p_forward += pf;
                    bin.p_backward += pb;
                    bin.members.push(label);
                }
                _ => bins.push(DftPoint {
                    condition: c.clone(),
                    sigma: s,
                    p_forward: pf,
                    p_backward: pb,
                    log_ratio: None,
                    members: vec![label],
                }),
            }
        }
        for mut bin in bins {
            if bin.p_forward > SUPPORT_TOL && bin.p_backward > SUPPORT_TOL {
                bin.log_ratio = Some(bin.p_forward.ln() - bin.p_backward.ln());
                points.push(bin);
            } else {
                empty.push(bin);
            }
        }
    }
    Ok(DetailedFt {
        kind: f.kind,
        conditioning,
        points,
        empty,
    })
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}
