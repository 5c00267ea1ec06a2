//! Seeded random generators for matrices, points, flags and subspaces.
//!
//! Used by the certifier's candidate sampling and by the test and
//! benchmark fixtures; every generator takes an explicit RNG so runs are
//! reproducible from a seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boundary::BoundaryPoint;
use crate::manifold::PdPoint;
use crate::numerics::{gram_schmidt, spectral_compose, CMat, SubspaceBasis, C64};

pub type Rng64 = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries with real and imaginary parts uniform in `[-1, 1]`.
pub fn random_complex(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMat {
    let a = random_complex(rng, n, n);
    (&a + a.adjoint()) * C64::from(0.5)
}

pub fn random_unitary(rng: &mut impl Rng, n: usize) -> CMat {
    loop {
        let a = random_complex(rng, n, n);
        if let Ok(q) = gram_schmidt(&a) {
            return q;
        }
    }
}

/// Positive-definite matrix `u diag(e^w) u^dag` with `w` uniform in
/// `[-spread, spread]`.
pub fn random_pd(rng: &mut impl Rng, n: usize, spread: f64) -> CMat {
    let u = random_unitary(rng, n);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-spread..=spread)).collect();
    spectral_compose(&u, w.iter().map(|x| x.exp()))
}

pub fn random_pd_point(rng: &mut impl Rng, n: usize, spread: f64) -> PdPoint {
    let u = random_unitary(rng, n);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-spread..=spread)).collect();
    PdPoint::from_spectral(u, w).expect("unitary frame")
}

/// Invertible matrix with singular values in `[e^-spread, e^spread]`.
pub fn random_invertible(rng: &mut impl Rng, n: usize, spread: f64) -> CMat {
    let u = random_unitary(rng, n);
    let v = random_unitary(rng, n);
    let mut s = u;
    for j in 0..n {
        let sv: f64 = rng.random_range(-spread..=spread);
        s.column_mut(j).scale_mut(sv.exp());
    }
    s * v.adjoint()
}

pub fn random_subspace(rng: &mut impl Rng, n: usize, dim: usize) -> SubspaceBasis {
    let u = random_unitary(rng, n);
    let idx: Vec<usize> = (0..dim).collect();
    SubspaceBasis::frame_columns(&u, &idx)
}

pub fn random_weights(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    w.sort_by(|a, b| b.total_cmp(a));
    w
}

/// Random boundary point with weights uniform in `[lo, hi]` and a random
/// unitary flag.
pub fn random_boundary_point(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> BoundaryPoint {
    let w = random_weights(rng, n, lo, hi);
    let u = random_unitary(rng, n);
    BoundaryPoint::canonicalize(&w, &u).expect("unitary basis")
}

/// Random permutation of `0..n`.
pub fn random_permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}
