//! Seeded random instances for the property suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coarse::Resolution;
use crate::dynamics::Protocol;
use crate::error::Result;
use crate::linalg::{c, CMatrix, HermitianOperator};
use crate::thermo::DensityMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `(A + A†)/2` with entries uniform on the unit square, times `scale`.
pub fn hermitian<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> HermitianOperator {
    let a = CMatrix::from_fn(dim, dim, |_, _| {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let h = (&a + a.adjoint()) * c(0.5 * scale, 0.0);
    HermitianOperator::new(h).expect("symmetrized matrix is Hermitian")
}

/// Full-rank state `G G† / Tr[G G†]` with a random complex `G`.
pub fn density_matrix<R: Rng>(rng: &mut R, dim: usize) -> DensityMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let m = &g * g.adjoint();
    let tr = m.trace();
    DensityMatrix::new(m / tr).expect("Gram matrix is a state")
}

/// Random composition of `dim` into at least two positive parts.
pub fn slot_sizes<R: Rng>(rng: &mut R, dim: usize) -> Vec<usize> {
    assert!(dim >= 2);
    loop {
        let mut sizes = Vec::new();
        let mut left = dim;
        while left > 0 {
            let s = rng.random_range(1..=left.min(4));
            sizes.push(s);
            left -= s;
        }
        if sizes.len() >= 2 {
            return sizes;
        }
    }
}

/// A driven system with its temperature and slot rule.
#[derive(Debug, Clone)]
pub struct Instance {
    pub protocol: Protocol,
    pub beta: f64,
    pub resolution: Resolution,
}

/// Dimension 4 to `max_dim`, one to three segments of random complex
/// Hamiltonians, `β ∈ [0.1, 4]`, and at least two slots at each end.
pub fn instance<R: Rng>(rng: &mut R, max_dim: usize) -> Result<Instance> {
    let dim = rng.random_range(4..=max_dim.max(4));
    let h0 = hermitian(rng, dim, 1.0);
    let nseg = rng.random_range(1..=3);
    let segments = (0..nseg)
        .map(|_| (hermitian(rng, dim, 1.0), rng.random_range(0.2..1.5)))
        .collect();
    let protocol = Protocol::new(h0, segments, 1.0)?;
    let beta = rng.random_range(0.1..4.0);
    let resolution = Resolution::Sizes(slot_sizes(rng, dim));
    Ok(Instance {
        protocol,
        beta,
        resolution,
    })
}

/// `count` instances from one seed.
pub fn instances(seed: u64, count: usize, max_dim: usize) -> Result<Vec<Instance>> {
    let mut r = rng(seed);
    (0..count).map(|_| instance(&mut r, max_dim)).collect()
}
