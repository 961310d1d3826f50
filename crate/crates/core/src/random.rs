//! Seeded random instances: Haar unitaries, Ginibre density matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::densemath::{self, c, CMatrix, C64};
use crate::states::{self, DensityMatrix};

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `index` derived from a base seed, used so that parallel
/// work units do not depend on scheduling order.
pub fn substream(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    c(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn ginibre<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| complex_normal(rng))
}

/// Haar-random unitary from Gram-Schmidt on a Ginibre matrix (the positive
/// diagonal of the implied R factor makes the distribution exactly Haar).
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    loop {
        if let Some(q) = densemath::orthonormalize_columns(&ginibre(n, rng)) {
            return q;
        }
    }
}

pub fn random_ket<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<C64> {
    let v: Vec<C64> = (0..n).map(|_| complex_normal(rng)).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}

/// `G G† / Tr` for Ginibre `G`; full rank with probability one.
pub fn random_density<R: Rng + ?Sized>(
    dims: &[usize],
    labels: &[char],
    rng: &mut R,
) -> DensityMatrix {
    let n: usize = dims.iter().product();
    loop {
        let g = ginibre(n, rng);
        let w = &g * &g.adjoint();
        let tr = w.trace().re;
        let m = w.scale(c(1.0 / tr, 0.0));
        if let Ok(rho) = DensityMatrix::new(m, dims, labels) {
            return rho;
        }
    }
}

/// Random pure state.
pub fn random_pure<R: Rng + ?Sized>(dims: &[usize], labels: &[char], rng: &mut R) -> DensityMatrix {
    let n: usize = dims.iter().product();
    states::DensityMatrix::pure(&random_ket(n, rng), dims, labels)
        .expect("normalized ket is a valid state")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_is_unitary() {
        let mut rng = rng_from_seed(3);
        for n in [2, 4, 8, 16] {
            assert!(haar_unitary(n, &mut rng).unitarity_defect() < 1e-12);
        }
    }

    #[test]
    fn seeds_reproduce() {
        let a = haar_unitary(4, &mut rng_from_seed(42));
        let b = haar_unitary(4, &mut rng_from_seed(42));
        assert_eq!(a, b);
        let s1 = random_ket(4, &mut substream(7, 1));
        let s2 = random_ket(4, &mut substream(7, 2));
        assert_ne!(s1, s2);
    }

    #[test]
    fn ginibre_state_is_full_rank() {
        let rho = random_density(&[2, 2], &['S', 'M'], &mut rng_from_seed(1));
        assert!(rho.eigen().unwrap().values[0] > 1e-8);
    }
}
