//! Seeded sampling of Hermitian matrices and vectors.
//!
//! The generator is Marsaglia's xorshift128 (`rand_xorshift::XorShiftRng`),
//! seeded from a single `u64` through `SeedableRng::seed_from_u64`. Every
//! randomized routine in the crate takes its seed explicitly so runs are
//! reproducible.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_xorshift::XorShiftRng;

use crate::hermitian::HermitianMatrix;

pub type SeededRng = XorShiftRng;

pub fn rng(seed: u64) -> SeededRng {
    XorShiftRng::seed_from_u64(seed)
}

/// Independent stream for worker `index` derived from a base seed.
pub fn worker_rng(seed: u64, index: u64) -> SeededRng {
    rng(seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn complex_uniform(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
}

fn square(n: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..n * n).map(|_| complex_uniform(rng)).collect()
}

/// `(M + M*) / 2` with entries of `M` uniform in `[-1, 1]^2`.
pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> HermitianMatrix {
    HermitianMatrix::from_any(n, square(n, rng)).expect("valid dimension")
}

/// `M M* + eps I`.
pub fn random_positive(n: usize, eps: f64, rng: &mut impl Rng) -> HermitianMatrix {
    HermitianMatrix::gram(n, &square(n, rng), eps).expect("valid dimension")
}

pub fn random_unit_vector(n: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    loop {
        let v: Vec<Complex64> = (0..n).map(|_| complex_uniform(rng)).collect();
        let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 1e-3 {
            return v.into_iter().map(|z| z / nrm).collect();
        }
    }
}
