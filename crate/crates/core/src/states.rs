//! Validated density matrices and the qubit state families used throughout:
//! thermal qubits, classically correlated and entangled system-memory pairs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::densemath::{self, c, re, CMatrix, EigenSystem, MathError, C64};

/// Tolerance for Hermiticity, unit trace and positivity.
pub const STATE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error(transparent)]
    Math(#[from] MathError),
    #[error("trace is {0:.12}, expected 1")]
    Trace(f64),
    #[error("minimum eigenvalue {0:.3e} is below the positivity tolerance")]
    NotPositive(f64),
    #[error("diagonal entry {index} is negative ({value:.3e})")]
    NegativeEntry { index: usize, value: f64 },
    #[error("subsystem labels {labels:?} do not match dimensions {dims:?}")]
    Labels { labels: Vec<char>, dims: Vec<usize> },
    #[error("no subsystem labelled '{0}'")]
    MissingLabel(char),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

pub type Result<T> = std::result::Result<T, StateError>;

/// Hermitian, unit-trace, positive semidefinite operator with named subsystems.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: CMatrix,
    dims: Vec<usize>,
    labels: Vec<char>,
}

impl DensityMatrix {
    /// Validate and wrap. Small anti-Hermitian noise is symmetrized away.
    pub fn new(mat: CMatrix, dims: &[usize], labels: &[char]) -> Result<Self> {
        let total: usize = dims.iter().product();
        let mut uniq = labels.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        if dims.len() != labels.len() || uniq.len() != labels.len() || dims.is_empty() {
            return Err(StateError::Labels {
                labels: labels.to_vec(),
                dims: dims.to_vec(),
            });
        }
        if !mat.is_square() || mat.rows() != total {
            return Err(MathError::DimensionMismatch(format!(
                "{}x{} matrix for subsystem dimensions {dims:?}",
                mat.rows(),
                mat.cols()
            ))
            .into());
        }
        if !mat.is_finite() {
            return Err(MathError::NonFinite.into());
        }
        let defect = mat.hermiticity_defect();
        if defect > STATE_TOL {
            return Err(MathError::NotHermitian(defect).into());
        }
        let mat = mat.hermitian_part();
        let tr = mat.trace().re;
        if (tr - 1.0).abs() > STATE_TOL {
            return Err(StateError::Trace(tr));
        }
        let min = densemath::eigh(&mat)?.values[0];
        if min < -STATE_TOL {
            return Err(StateError::NotPositive(min));
        }
        Ok(Self {
            mat,
            dims: dims.to_vec(),
            labels: labels.to_vec(),
        })
    }

    /// Single-qubit state with one label.
    pub fn qubit(mat: CMatrix, label: char) -> Result<Self> {
        Self::new(mat, &[2], &[label])
    }

    /// `|ψ><ψ|` after normalizing `psi`.
    pub fn pure(psi: &[C64], dims: &[usize], labels: &[char]) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(StateError::Parameter(
                "state vector has zero or non-finite norm".into(),
            ));
        }
        let v: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Self::new(CMatrix::outer(&v), dims, labels)
    }

    /// Diagonal state in the computational basis.
    pub fn diagonal(probs: &[f64], dims: &[usize], labels: &[char]) -> Result<Self> {
        if let Some((index, &value)) = probs.iter().enumerate().find(|(_, &p)| p < -STATE_TOL) {
            return Err(StateError::NegativeEntry { index, value });
        }
        Self::new(CMatrix::from_diag(probs), dims, labels)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[char] {
        &self.labels
    }

    pub fn index_of(&self, label: char) -> Result<usize> {
        self.labels
            .iter()
            .position(|&l| l == label)
            .ok_or(StateError::MissingLabel(label))
    }

    pub fn has_label(&self, label: char) -> bool {
        self.labels.contains(&label)
    }

    pub fn relabel(mut self, labels: &[char]) -> Result<Self> {
        let mut uniq = labels.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        if labels.len() != self.dims.len() || uniq.len() != labels.len() {
            return Err(StateError::Labels {
                labels: labels.to_vec(),
                dims: self.dims.clone(),
            });
        }
        self.labels = labels.to_vec();
        Ok(self)
    }

    /// Reduced state on the given labels (kept in this state's order).
    pub fn reduce(&self, keep: &[char]) -> Result<Self> {
        let mut idx = keep
            .iter()
            .map(|&l| self.index_of(l))
            .collect::<Result<Vec<_>>>()?;
        idx.sort_unstable();
        idx.dedup();
        if idx.len() == self.dims.len() {
            return Ok(self.clone());
        }
        let mat = densemath::partial_trace(&self.mat, &self.dims, &idx)?;
        let dims: Vec<usize> = idx.iter().map(|&i| self.dims[i]).collect();
        let labels: Vec<char> = idx.iter().map(|&i| self.labels[i]).collect();
        Ok(Self {
            mat: mat.hermitian_part(),
            dims,
            labels,
        })
    }

    /// `self ⊗ other`; labels must stay distinct.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let labels: Vec<char> = self.labels.iter().chain(&other.labels).copied().collect();
        let dims: Vec<usize> = self.dims.iter().chain(&other.dims).copied().collect();
        let mut uniq = labels.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != labels.len() {
            return Err(StateError::Labels { labels, dims });
        }
        if dims.iter().product::<usize>() > densemath::MAX_DIM {
            return Err(MathError::TooLarge(dims.iter().product()).into());
        }
        Ok(Self {
            mat: densemath::tensor(&self.mat, &other.mat),
            dims,
            labels,
        })
    }

    /// Reorder subsystems so that labels appear in `order`.
    pub fn permute(&self, order: &[char]) -> Result<Self> {
        if order.len() != self.labels.len() {
            return Err(StateError::Labels {
                labels: order.to_vec(),
                dims: self.dims.clone(),
            });
        }
        let perm = order
            .iter()
            .map(|&l| self.index_of(l))
            .collect::<Result<Vec<_>>>()?;
        let new_dims: Vec<usize> = perm.iter().map(|&i| self.dims[i]).collect();
        let n = self.dim();
        let old_strides = strides(&self.dims);
        let map: Vec<usize> = (0..n)
            .map(|flat| {
                let mut rem = flat;
                let mut old = 0;
                for k in (0..new_dims.len()).rev() {
                    let digit = rem % new_dims[k];
                    rem /= new_dims[k];
                    old += digit * old_strides[perm[k]];
                }
                old
            })
            .collect();
        let mat = CMatrix::from_fn(n, n, |i, j| self.mat[(map[i], map[j])]);
        Ok(Self {
            mat,
            dims: new_dims,
            labels: order.to_vec(),
        })
    }

    /// `U ρ U†` for a unitary on the whole register.
    pub fn evolve(&self, u: &CMatrix) -> Result<Self> {
        if u.rows() != self.dim() || !u.is_square() {
            return Err(MathError::DimensionMismatch(format!(
                "{}x{} unitary on a {}-dimensional state",
                u.rows(),
                u.cols(),
                self.dim()
            ))
            .into());
        }
        u.ensure_unitary(1e-10)?;
        Ok(Self {
            mat: self.mat.conjugate_by(u).hermitian_part(),
            ..self.clone()
        })
    }

    /// Apply a unitary acting on the listed labels (in the listed order).
    pub fn evolve_on(&self, u: &CMatrix, on: &[char]) -> Result<Self> {
        let sites = on
            .iter()
            .map(|&l| self.index_of(l))
            .collect::<Result<Vec<_>>>()?;
        let full = densemath::embed(u, &sites, &self.dims)?;
        self.evolve(&full)
    }

    /// Dephase in an orthonormal basis of the whole register.
    pub fn dephase(&self, basis: &CMatrix) -> Result<Self> {
        let mat = densemath::dephase(&self.mat, basis)?;
        Ok(Self {
            mat: mat.hermitian_part(),
            ..self.clone()
        })
    }

    pub fn eigen(&self) -> Result<EigenSystem> {
        Ok(densemath::eigh(&self.mat)?)
    }

    /// Computational-basis populations.
    pub fn populations(&self) -> Vec<f64> {
        self.mat.diag_real()
    }

    /// `Tr(ρ A)`, real part.
    pub fn expectation(&self, a: &CMatrix) -> f64 {
        (&self.mat * a).trace().re
    }

    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        Ok(densemath::trace_distance(&self.mat, &other.mat)?)
    }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// `H = E |1><1|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QubitHamiltonian {
    pub excited_energy: f64,
}

impl QubitHamiltonian {
    pub fn new(excited_energy: f64) -> Self {
        Self { excited_energy }
    }

    pub fn matrix(&self) -> CMatrix {
        CMatrix::from_diag(&[0.0, self.excited_energy])
    }

    /// Excited-state thermal population `e^{-βE}/(1+e^{-βE})`.
    pub fn excited_population(&self, beta: f64) -> f64 {
        logistic(-beta * self.excited_energy)
    }
}

/// `1/(1+e^{-x})` without overflow.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gibbs state of `h` at inverse temperature `beta`, labelled `label`.
pub fn thermal_state(h: QubitHamiltonian, beta: f64, label: char) -> Result<DensityMatrix> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(StateError::Parameter(format!(
            "inverse temperature must be finite and >= 0, got {beta}"
        )));
    }
    if !h.excited_energy.is_finite() {
        return Err(StateError::Parameter(
            "excited energy must be finite".into(),
        ));
    }
    let p1 = h.excited_population(beta);
    DensityMatrix::diagonal(&[1.0 - p1, p1], &[2], &[label])
}

/// Ground-state population of a thermal qubit, `(1+e^{-βE})^{-1}`.
pub fn thermal_ground_population(beta_e: f64) -> f64 {
    logistic(beta_e)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    Classical,
    Quantum,
    Product,
}

/// Initial system-memory state family with ground population `p` and noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFamily {
    pub kind: CorrelationKind,
    pub p: f64,
    pub noise: f64,
}

impl CorrelationFamily {
    pub fn new(kind: CorrelationKind, p: f64, noise: f64) -> Result<Self> {
        let f = Self { kind, p, noise };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(StateError::Parameter(format!(
                "p must lie in (0,1), got {}",
                self.p
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(StateError::Parameter(format!(
                "noise must lie in [0,1], got {}",
                self.noise
            )));
        }
        Ok(())
    }

    /// The state on labels (S, M).
    pub fn state(&self) -> Result<DensityMatrix> {
        self.validate()?;
        match self.kind {
            CorrelationKind::Classical => classical_corr_state(self.p, self.noise),
            CorrelationKind::Quantum => quantum_corr_state(self.p, self.noise),
            CorrelationKind::Product => {
                let t = [self.p, 1.0 - self.p];
                let probs = [t[0] * t[0], t[0] * t[1], t[1] * t[0], t[1] * t[1]];
                DensityMatrix::diagonal(&probs, &[2, 2], &['S', 'M'])
            }
        }
    }
}

/// `diag(p - εq, εq, εq, 1 - p - εq)` with `q = p(1-p)`, on (S, M).
pub fn classical_corr_state(p: f64, eps_c: f64) -> Result<DensityMatrix> {
    if !p.is_finite() || !eps_c.is_finite() {
        return Err(StateError::Parameter("non-finite parameter".into()));
    }
    let q = p * (1.0 - p);
    let probs = [p - eps_c * q, eps_c * q, eps_c * q, 1.0 - p - eps_c * q];
    if let Some((index, &value)) = probs.iter().enumerate().find(|(_, &x)| x < 0.0) {
        return Err(StateError::NegativeEntry { index, value });
    }
    DensityMatrix::diagonal(&probs, &[2, 2], &['S', 'M'])
}

/// `p|00><00| + (1-p)|11><11| + (1-ε)√(p(1-p)) (|00><11| + h.c.)`, on (S, M).
pub fn quantum_corr_state(p: f64, eps_q: f64) -> Result<DensityMatrix> {
    if !(p > 0.0 && p < 1.0) {
        return Err(StateError::Parameter(format!(
            "p must lie in (0,1), got {p}"
        )));
    }
    if !(0.0..=1.0).contains(&eps_q) {
        return Err(StateError::Parameter(format!(
            "noise must lie in [0,1], got {eps_q}"
        )));
    }
    let coh = (1.0 - eps_q) * (p * (1.0 - p)).sqrt();
    let mut m = CMatrix::from_diag(&[p, 0.0, 0.0, 1.0 - p]);
    m[(0, 3)] = re(coh);
    m[(3, 0)] = re(coh);
    DensityMatrix::new(m, &[2, 2], &['S', 'M'])
}

/// Computational basis ket `|k>` of dimension `dim`.
pub fn basis_ket(dim: usize, k: usize) -> Vec<C64> {
    (0..dim)
        .map(|i| if i == k { re(1.0) } else { c(0.0, 0.0) })
        .collect()
}
