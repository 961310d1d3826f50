//! Entropic functionals in nats.

use crate::densemath::CMatrix;
use crate::states::{DensityMatrix, Result};

/// Eigenvalues below this contribute nothing to `-λ ln λ`.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Shannon entropy of a probability vector (entries below the floor ignored).
pub fn shannon(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > EIGEN_FLOOR)
        .map(|&p| -p * p.ln())
        .sum()
}

/// `-p ln p - (1-p) ln(1-p)`.
pub fn binary_entropy(p: f64) -> f64 {
    shannon(&[p, 1.0 - p])
}

pub fn vn_entropy(rho: &DensityMatrix) -> Result<f64> {
    Ok(shannon(&rho.eigen()?.values))
}

/// Entropy of the reduced state on `labels`.
pub fn entropy_of(rho: &DensityMatrix, labels: &[char]) -> Result<f64> {
    vn_entropy(&rho.reduce(labels)?)
}

/// `S(ρ) - S(ρ_B)` where `B` is the conditioning subsystem.
pub fn conditional_entropy(rho: &DensityMatrix, condition: char) -> Result<f64> {
    Ok(vn_entropy(rho)? - entropy_of(rho, &[condition])?)
}

/// `S_A + S_B - S_AB` for disjoint label sets.
pub fn mutual_information(rho: &DensityMatrix, a: &[char], b: &[char]) -> Result<f64> {
    let ab: Vec<char> = a.iter().chain(b).copied().collect();
    Ok(entropy_of(rho, a)? + entropy_of(rho, b)? - entropy_of(rho, &ab)?)
}

/// `I(A:B|C) = S_AC + S_BC - S_C - S_ABC`.
pub fn conditional_mutual_information(
    rho: &DensityMatrix,
    a: &[char],
    b: &[char],
    cond: &[char],
) -> Result<f64> {
    let ac: Vec<char> = a.iter().chain(cond).copied().collect();
    let bc: Vec<char> = b.iter().chain(cond).copied().collect();
    let abc: Vec<char> = a.iter().chain(b).chain(cond).copied().collect();
    Ok(entropy_of(rho, &ac)? + entropy_of(rho, &bc)?
        - entropy_of(rho, cond)?
        - entropy_of(rho, &abc)?)
}

/// Relative entropy of coherence `S(dephased ρ) - S(ρ)` in `basis`.
pub fn coherence_j(rho: &DensityMatrix, basis: &CMatrix) -> Result<f64> {
    let dephased = rho.dephase(basis)?;
    Ok(vn_entropy(&dephased)? - vn_entropy(rho)?)
}
