//! Seeded random matrices for sampling and residual checks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{c, hermitize, identity, trace_re, CMat, C64};

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for task `index` derived from a base seed.
pub fn substream(seed: u64, index: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index.wrapping_add(1));
    r
}

pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn uniform(rng: &mut Rng) -> f64 {
    rand::Rng::random::<f64>(rng)
}

/// Complex Gaussian matrix with unit-variance entries.
pub fn ginibre(d: usize, rng: &mut Rng) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(d, d, |_, _| C64::new(s * normal(rng), s * normal(rng)))
}

pub fn hermitian(d: usize, rng: &mut Rng) -> CMat {
    hermitize(&ginibre(d, rng))
}

/// `G G†` normalized to unit trace.
pub fn density(d: usize, rng: &mut Rng) -> CMat {
    let g = ginibre(d, rng);
    let m = &g * g.adjoint();
    let t = trace_re(&m);
    hermitize(&(m / c(t)))
}

/// Random positive definite matrix with eigenvalues bounded below by `floor` (relative to trace).
pub fn positive_definite(d: usize, floor: f64, rng: &mut Rng) -> CMat {
    let rho = density(d, rng);
    hermitize(&((rho + identity(d) * c(floor)) * c(d as f64)))
}

/// Random positive semidefinite matrix of the given rank.
pub fn psd_of_rank(d: usize, rank: usize, rng: &mut Rng) -> CMat {
    let g = CMat::from_fn(d, rank, |_, _| {
        C64::new(normal(rng), normal(rng)) * c(std::f64::consts::FRAC_1_SQRT_2)
    });
    hermitize(&(&g * g.adjoint()))
}

/// Haar-random unitary (QR of a Ginibre matrix with phase correction).
pub fn unitary(d: usize, rng: &mut Rng) -> CMat {
    let qr = ginibre(d, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let z = r[(j, j)];
        let ph = if z.norm() > 0.0 {
            z / c(z.norm())
        } else {
            c(1.0)
        };
        for i in 0..d {
            q[(i, j)] *= ph;
        }
    }
    q
}
