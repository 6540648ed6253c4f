//! Random matrices, states and maps for tests and verification suites.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{hs_norm, identity, operator_norm, ComplexMatrix};
use crate::maps::KrausMap;
use crate::rng::{block_stream, RngStream};

pub fn seeded(seed: u64) -> RngStream {
    block_stream(seed, 0)
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Square matrix with i.i.d. standard complex Gaussian entries.
pub fn random_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |_, _| complex_normal(rng))
}

pub fn random_rect<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_normal(rng))
}

/// Full-rank density matrix `G G^dag / Tr`.
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let g = random_matrix(d, rng);
    let rho = &g * g.adjoint();
    let tr = rho.trace();
    rho.map(|z| z / tr)
}

/// Contraction with operator norm `scale` (< 1 for a strict contraction).
pub fn random_contraction<R: Rng + ?Sized>(d: usize, scale: f64, rng: &mut R) -> ComplexMatrix {
    let g = random_matrix(d, rng);
    let norm = operator_norm(&g);
    g.scale(scale / norm)
}

/// Normalized (`|psi|_HS = 1`) entangler matrix, well conditioned.
pub fn random_entangler<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let m = random_matrix(d, rng) + identity(d).scale(1.5);
    let n = hs_norm(&m);
    m.unscale(n)
}

/// Trace-preserving map with `count` Kraus operators cut from a random
/// isometry `C^d -> C^(count d)`.
pub fn random_kraus_map<R: Rng + ?Sized>(d: usize, count: usize, rng: &mut R) -> KrausMap {
    let g = random_rect(count * d, d, rng);
    let q = g.qr().q();
    let kraus = (0..count)
        .map(|n| q.rows(n * d, d).into_owned())
        .collect();
    KrausMap::new(kraus).expect("isometry blocks form a valid Kraus map")
}

pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<Complex64> {
    let v = DVector::from_fn(d, |_, _| complex_normal(rng));
    let n = v.norm();
    v.unscale(n)
}
