//! Dense complex linear algebra for registers of at most four qubits.
//!
//! Everything here is exact and dense: Kronecker products, partial traces
//! over arbitrary subsystem sets, a cyclic Jacobi eigensolver for Hermitian
//! matrices, dephasing in a given orthonormal basis and the trace distance.
//! Subsystem ordering follows the usual convention: in `tensor(a, b)` the
//! indices of `a` are the most significant.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Largest Hilbert-space dimension handled by the eigensolver and partial trace.
pub const MAX_DIM: usize = 16;

/// Hermiticity defect tolerated before symmetrizing.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Off-diagonal Frobenius norm at which Jacobi sweeps stop.
pub const JACOBI_TOL: f64 = 1e-14;

const MAX_SWEEPS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not Hermitian (max defect {0:.3e})")]
    NotHermitian(f64),
    #[error("basis is not orthonormal (max defect {0:.3e})")]
    NotOrthonormal(f64),
    #[error("matrix is not unitary (max defect {0:.3e})")]
    NotUnitary(f64),
    #[error("Jacobi sweeps did not converge (off-diagonal norm {0:.3e})")]
    NoConvergence(f64),
    #[error("dimension {0} exceeds the supported maximum of {MAX_DIM}")]
    TooLarge(usize),
}

pub type Result<T> = std::result::Result<T, MathError>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = re(1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(MathError::DimensionMismatch(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let m = Self { rows, cols, data };
        if !m.is_finite() {
            return Err(MathError::NonFinite);
        }
        Ok(m)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Real diagonal matrix.
    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = re(d);
        }
        m
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<C64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if cols == 0 || rows == 0 || columns.iter().any(|c| c.len() != rows) {
            return Err(MathError::DimensionMismatch(
                "ragged or empty column set".into(),
            ));
        }
        Ok(Self::from_fn(rows, cols, |i, j| columns[j][i]))
    }

    /// Projector-like outer product `|v><v|`.
    pub fn outer(v: &[C64]) -> Self {
        Self::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols))
            .map(|i| self[(i, i)])
            .collect()
    }

    pub fn diag_real(&self) -> Vec<f64> {
        self.diag().into_iter().map(|z| z.re).collect()
    }

    pub fn trace(&self) -> C64 {
        self.diag().into_iter().sum()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, k: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * k).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Max-abs entrywise difference; infinite when shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.rows != other.rows || self.cols != other.cols {
            return f64::INFINITY;
        }
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `max |U†U - 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        (&self.adjoint() * self).max_abs_diff(&Self::identity(self.rows))
    }

    pub fn ensure_unitary(&self, tol: f64) -> Result<()> {
        let d = self.unitarity_defect();
        if d > tol {
            return Err(MathError::NotUnitary(d));
        }
        Ok(())
    }

    /// `(A + A†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * 0.5
        })
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols, "matrix-vector shape mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// `U · self · U†`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        &(u * self) * &u.adjoint()
    }

    /// `<v| self |w>`.
    pub fn sandwich(&self, v: &[C64], w: &[C64]) -> C64 {
        let mw = self.mul_vec(w);
        v.iter().zip(&mw).map(|(a, b)| a.conj() * b).sum()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(k, j)];
                }
            }
        }
        out
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;

    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "matrix sum shape mismatch"
        );
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;

    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "matrix difference shape mismatch"
        );
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_fn(2, 2, |i, j| if i != j { re(1.0) } else { re(0.0) })
}

pub fn pauli_y() -> CMatrix {
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 1)] = c(0.0, -1.0);
    m[(1, 0)] = c(0.0, 1.0);
    m
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_diag(&[1.0, -1.0])
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    CMatrix::from_fn(rows, cols, |i, j| {
        a[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
    })
}

/// Left-to-right Kronecker product of a list of factors.
pub fn tensor_all(factors: &[&CMatrix]) -> CMatrix {
    let mut it = factors.iter();
    let first = match it.next() {
        Some(m) => (*m).clone(),
        None => return CMatrix::identity(1),
    };
    it.fold(first, |acc, m| tensor(&acc, m))
}

/// Kronecker product of state vectors.
pub fn tensor_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| x * y))
        .collect()
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Flat offsets of every multi-index over `sites` (in the listed order).
fn site_offsets(sites: &[usize], dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0usize];
    for &s in sites {
        offsets = offsets
            .iter()
            .flat_map(|&o| (0..dims[s]).map(move |d| o + d * strides[s]))
            .collect();
    }
    offsets
}

fn check_dims(m: &CMatrix, dims: &[usize]) -> Result<()> {
    let total: usize = dims.iter().product();
    if !m.is_square() || m.rows != total || dims.contains(&0) {
        return Err(MathError::DimensionMismatch(format!(
            "{}x{} matrix does not match subsystem dimensions {dims:?}",
            m.rows, m.cols
        )));
    }
    if total > MAX_DIM {
        return Err(MathError::TooLarge(total));
    }
    Ok(())
}

/// Reduced operator on the subsystems listed in `keep`.
///
/// Kept subsystems appear in their original relative order regardless of the
/// order in `keep`. An empty `keep` traces everything out and returns the
/// 1x1 matrix holding the trace.
pub fn partial_trace(rho: &CMatrix, dims: &[usize], keep: &[usize]) -> Result<CMatrix> {
    check_dims(rho, dims)?;
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.iter().any(|&k| k >= dims.len()) {
        return Err(MathError::DimensionMismatch(format!(
            "subsystem index out of range in {keep:?} for {} subsystems",
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !kept.contains(i)).collect();
    let st = strides(dims);
    let ok = site_offsets(&kept, dims, &st);
    let ot = site_offsets(&traced, dims, &st);
    let n = ok.len();
    Ok(CMatrix::from_fn(n, n, |i, j| {
        ot.iter().map(|&t| rho[(ok[i] + t, ok[j] + t)]).sum()
    }))
}

/// Lift `op`, acting on `sites` (in the listed order), to the full register.
pub fn embed(op: &CMatrix, sites: &[usize], dims: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    let op_dim: usize = sites
        .iter()
        .map(|&s| dims.get(s).copied().unwrap_or(0))
        .product();
    let mut seen = sites.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != sites.len() || !op.is_square() || op.rows != op_dim || op_dim == 0 {
        return Err(MathError::DimensionMismatch(format!(
            "{}x{} operator cannot act on sites {sites:?} of {dims:?}",
            op.rows, op.cols
        )));
    }
    let rest: Vec<usize> = (0..dims.len()).filter(|i| !sites.contains(i)).collect();
    let st = strides(dims);
    let os = site_offsets(sites, dims, &st);
    let or = site_offsets(&rest, dims, &st);
    let mut full = CMatrix::zeros(total, total);
    for &r in &or {
        for (i, &oi) in os.iter().enumerate() {
            for (j, &oj) in os.iter().enumerate() {
                full[(oi + r, oj + r)] = op[(i, j)];
            }
        }
    }
    Ok(full)
}

/// Spectral decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: CMatrix,
}

impl EigenSystem {
    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V diag(λ) V†`.
    pub fn reconstruct(&self) -> CMatrix {
        let v = &self.vectors;
        let n = self.values.len();
        CMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| v[(i, k)] * self.values[k] * v[(j, k)].conj())
                .sum()
        })
    }
}

fn off_diagonal_norm(a: &CMatrix) -> f64 {
    let n = a.rows;
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
///
/// Eigenvalues come out ascending (stable in the input order for exact
/// ties). Each eigenvector is rotated so that its largest-magnitude
/// component is real and positive, the first such index winning ties, which
/// makes the output a deterministic function of the input.
pub fn eigh(h: &CMatrix) -> Result<EigenSystem> {
    if !h.is_square() {
        return Err(MathError::DimensionMismatch(format!(
            "{}x{} is not square",
            h.rows, h.cols
        )));
    }
    let n = h.rows;
    if n > MAX_DIM {
        return Err(MathError::TooLarge(n));
    }
    if !h.is_finite() {
        return Err(MathError::NonFinite);
    }
    let defect = h.hermiticity_defect();
    if defect > HERMITIAN_TOL {
        return Err(MathError::NotHermitian(defect));
    }
    let mut a = h.hermitian_part();
    for i in 0..n {
        a[(i, i)].im = 0.0;
    }
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius().max(1.0);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= JACOBI_TOL * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        let off = off_diagonal_norm(&a);
        if off > JACOBI_TOL * scale {
            return Err(MathError::NoConvergence(off));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        let col = fix_phase(v.column(src));
        for i in 0..n {
            vectors[(i, k)] = col[i];
        }
    }
    Ok(EigenSystem { values, vectors })
}

/// One Jacobi rotation zeroing `a[p][q]`, accumulated into `v`.
fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let phase_conj = (apq / mag).conj();
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = 0.5 * (2.0 * mag).atan2(aqq - app);
    let (s, cs) = theta.sin_cos();
    // J = diag(1, e^{-iφ}) on (p, q) followed by a real rotation.
    let jpp = re(cs);
    let jpq = re(s);
    let jqp = phase_conj * (-s);
    let jqq = phase_conj * cs;
    let n = a.rows;
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * jpp + akq * jqp;
        a[(k, q)] = akp * jpq + akq * jqq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
        a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
    }
    a[(p, q)] = re(0.0);
    a[(q, p)] = re(0.0);
    a[(p, p)].im = 0.0;
    a[(q, q)].im = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * jpp + vkq * jqp;
        v[(k, q)] = vkp * jpq + vkq * jqq;
    }
}

fn fix_phase(mut col: Vec<C64>) -> Vec<C64> {
    let max = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if max == 0.0 {
        return col;
    }
    let lead = col
        .iter()
        .position(|z| z.norm() >= max - 1e-12)
        .unwrap_or(0);
    let ph = col[lead].conj() / col[lead].norm();
    for z in &mut col {
        *z *= ph;
    }
    col
}

/// `max |B†B - 1|` for a matrix of column vectors.
pub fn orthonormality_defect(basis: &CMatrix) -> f64 {
    (&basis.adjoint() * basis).max_abs_diff(&CMatrix::identity(basis.cols))
}

/// Remove all coherences in the basis given by the columns of `basis`:
/// `Σ_k |v_k><v_k| ρ |v_k><v_k|`.
pub fn dephase(rho: &CMatrix, basis: &CMatrix) -> Result<CMatrix> {
    if !rho.is_square() || !basis.is_square() || basis.rows != rho.rows {
        return Err(MathError::DimensionMismatch(format!(
            "cannot dephase a {}x{} matrix in a {}x{} basis",
            rho.rows, rho.cols, basis.rows, basis.cols
        )));
    }
    let defect = orthonormality_defect(basis);
    if defect > HERMITIAN_TOL {
        return Err(MathError::NotOrthonormal(defect));
    }
    let n = rho.rows;
    let mut out = CMatrix::zeros(n, n);
    for k in 0..n {
        let vk = basis.column(k);
        let w = rho.sandwich(&vk, &vk);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += w * vk[i] * vk[j].conj();
            }
        }
    }
    Ok(out)
}

/// Half the trace norm of `a - b` for Hermitian `a`, `b`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(MathError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let es = eigh(&(a - b))?;
    Ok(0.5 * es.values.iter().map(|x| x.abs()).sum::<f64>())
}

/// Modified Gram-Schmidt on the columns of `m`. Returns `None` when the
/// columns are (numerically) linearly dependent.
pub fn orthonormalize_columns(m: &CMatrix) -> Option<CMatrix> {
    let mut cols: Vec<Vec<C64>> = (0..m.cols).map(|j| m.column(j)).collect();
    for j in 0..cols.len() {
        for k in 0..j {
            let proj: C64 = cols[k]
                .iter()
                .zip(&cols[j])
                .map(|(a, b)| a.conj() * b)
                .sum();
            let (head, tail) = cols.split_at_mut(j);
            for (x, y) in tail[0].iter_mut().zip(&head[k]) {
                *x -= proj * y;
            }
        }
        let norm = cols[j].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return None;
        }
        for x in &mut cols[j] {
            *x /= norm;
        }
    }
    CMatrix::from_columns(&cols).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        // small LCG keeps this module free of test-only dependencies
        let mut state = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let g = CMatrix::from_fn(n, n, |_, _| c(next(), next()));
        (&g + &g.adjoint()).scale(re(0.5))
    }

    #[test]
    fn identity_tensor_identity() {
        let i2 = CMatrix::identity(2);
        assert_eq!(tensor(&i2, &i2), CMatrix::identity(4));
    }

    #[test]
    fn diagonal_tensor_product() {
        let (p, q) = (0.3, 0.8);
        let t = tensor(
            &CMatrix::from_diag(&[p, 1.0 - p]),
            &CMatrix::from_diag(&[q, 1.0 - q]),
        );
        let want =
            CMatrix::from_diag(&[p * q, p * (1.0 - q), (1.0 - p) * q, (1.0 - p) * (1.0 - q)]);
        assert!(t.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn pauli_x_tensor_pauli_z_blocks() {
        let t = tensor(&pauli_x(), &pauli_z());
        let z = pauli_z();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(t[(i, j)], re(0.0));
                assert_eq!(t[(i, j + 2)], z[(i, j)]);
                assert_eq!(t[(i + 2, j)], z[(i, j)]);
                assert_eq!(t[(i + 2, j + 2)], re(0.0));
            }
        }
    }

    #[test]
    fn tensor_is_associative() {
        let a = random_hermitian(2, 1);
        let b = random_hermitian(2, 2);
        let d = random_hermitian(2, 3);
        let left = tensor(&tensor(&a, &b), &d);
        let right = tensor(&a, &tensor(&b, &d));
        assert!(left.max_abs_diff(&right) < 1e-15);
    }

    #[test]
    fn product_state_marginal() {
        let a = CMatrix::from_diag(&[0.25, 0.75]);
        let mut b = CMatrix::from_diag(&[0.6, 0.4]);
        b[(0, 1)] = c(0.1, 0.2);
        b[(1, 0)] = c(0.1, -0.2);
        let ab = tensor(&a, &b);
        assert!(partial_trace(&ab, &[2, 2], &[0]).unwrap().max_abs_diff(&a) < 1e-15);
        assert!(partial_trace(&ab, &[2, 2], &[1]).unwrap().max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let bell = CMatrix::outer(&[re(s), re(0.0), re(0.0), re(s)]);
        let red = partial_trace(&bell, &[2, 2], &[0]).unwrap();
        assert!(red.max_abs_diff(&CMatrix::from_diag(&[0.5, 0.5])) < 1e-15);
    }

    #[test]
    fn partial_trace_over_everything_is_trace() {
        let h = random_hermitian(8, 4);
        let t = partial_trace(&h, &[2, 2, 2], &[]).unwrap();
        assert_eq!((t.rows(), t.cols()), (1, 1));
        assert!((t[(0, 0)] - h.trace()).norm() < 1e-14);
    }

    #[test]
    fn partial_traces_commute() {
        let h = random_hermitian(8, 5);
        let dims = [2, 2, 2];
        let a = partial_trace(&partial_trace(&h, &dims, &[0, 1]).unwrap(), &[2, 2], &[0]).unwrap();
        let b = partial_trace(&partial_trace(&h, &dims, &[0, 2]).unwrap(), &[2, 2], &[0]).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-14);
    }

    #[test]
    fn partial_trace_rejects_bad_dims() {
        let h = random_hermitian(4, 6);
        assert!(matches!(
            partial_trace(&h, &[2, 3], &[0]),
            Err(MathError::DimensionMismatch(_))
        ));
        assert!(partial_trace(&h, &[2, 2], &[2]).is_err());
    }

    #[test]
    fn embed_matches_kron_on_leading_site() {
        let x = pauli_x();
        let e = embed(&x, &[0], &[2, 2]).unwrap();
        assert!(e.max_abs_diff(&tensor(&x, &CMatrix::identity(2))).abs() < 1e-15);
        // reversed site order swaps the roles of the two factors
        let xz = tensor(&pauli_x(), &pauli_z());
        let swapped = embed(&xz, &[1, 0], &[2, 2]).unwrap();
        assert!(swapped.max_abs_diff(&tensor(&pauli_z(), &pauli_x())) < 1e-15);
    }

    #[test]
    fn eigh_pauli_z() {
        let es = eigh(&pauli_z()).unwrap();
        assert_eq!(es.values, vec![-1.0, 1.0]);
    }

    #[test]
    fn eigh_pauli_x_phase_convention() {
        let es = eigh(&pauli_x()).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((es.values[0] + 1.0).abs() < 1e-15 && (es.values[1] - 1.0).abs() < 1e-15);
        let minus = es.vector(0);
        let plus = es.vector(1);
        assert!((minus[0] - re(s)).norm() < 1e-14 && (minus[1] + re(s)).norm() < 1e-14);
        assert!((plus[0] - re(s)).norm() < 1e-14 && (plus[1] - re(s)).norm() < 1e-14);
    }

    #[test]
    fn eigh_reconstructs_random_8x8() {
        for seed in 0..20 {
            let h = random_hermitian(8, seed);
            let es = eigh(&h).unwrap();
            assert!(es.reconstruct().max_abs_diff(&h) < 1e-12, "seed {seed}");
            assert!(orthonormality_defect(&es.vectors) < 1e-12);
            assert!(es.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eigh_is_deterministic() {
        let h = random_hermitian(4, 9);
        let a = eigh(&h).unwrap();
        let b = eigh(&h).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn eigh_rejects_non_hermitian() {
        let mut m = CMatrix::identity(2);
        m[(0, 1)] = re(1e-6);
        assert!(matches!(eigh(&m), Err(MathError::NotHermitian(_))));
    }

    #[test]
    fn dephase_examples() {
        let d = CMatrix::from_diag(&[0.2, 0.8]);
        let z = CMatrix::identity(2);
        assert!(dephase(&d, &z).unwrap().max_abs_diff(&d) < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = CMatrix::outer(&[re(s), re(s)]);
        assert!(
            dephase(&plus, &z)
                .unwrap()
                .max_abs_diff(&CMatrix::from_diag(&[0.5, 0.5]))
                < 1e-15
        );
        let h = random_hermitian(4, 11);
        let once = dephase(&h, &CMatrix::identity(4)).unwrap();
        let twice = dephase(&once, &CMatrix::identity(4)).unwrap();
        assert!(once.max_abs_diff(&twice) < 1e-15);
    }

    #[test]
    fn dephase_rejects_non_orthonormal_basis() {
        let mut b = CMatrix::identity(2);
        b[(0, 1)] = re(0.3);
        assert!(matches!(
            dephase(&CMatrix::identity(2), &b),
            Err(MathError::NotOrthonormal(_))
        ));
    }

    #[test]
    fn trace_distance_examples() {
        let a = CMatrix::from_diag(&[0.7, 0.3]);
        assert!(trace_distance(&a, &a).unwrap().abs() < 1e-15);
        let zero = CMatrix::from_diag(&[1.0, 0.0]);
        let one = CMatrix::from_diag(&[0.0, 1.0]);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-15);
        let b = CMatrix::from_diag(&[0.6, 0.4]);
        assert!((trace_distance(&a, &b).unwrap() - 0.1).abs() < 1e-14);
        assert!(trace_distance(&a, &CMatrix::identity(4)).is_err());
    }

    #[test]
    fn gram_schmidt_gives_orthonormal_columns() {
        let h = random_hermitian(4, 13);
        let q = orthonormalize_columns(&(&h + &CMatrix::identity(4).scale(re(3.0)))).unwrap();
        assert!(orthonormality_defect(&q) < 1e-13);
    }
}
