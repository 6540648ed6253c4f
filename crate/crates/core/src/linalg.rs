//! Dense complex linear algebra and the matrix <-> bipartite-vector
//! correspondence.
//!
//! A bipartite vector `|psi>> = sum_ij psi_ij |i> (x) |j>` is stored with the
//! row index first: amplitude `(i, j)` lives at flat position `i * d + j` and
//! equals the matrix entry `psi_ij`. With this ordering `(A (x) C^T) vec(B) =
//! vec(A B C)`, so acting with `A (x) I` on `vec(psi)` is `vec(A psi)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{shape, Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type RealMatrix = DMatrix<f64>;

/// Matrices whose reciprocal condition number falls below this are refused.
pub const RCOND_THRESHOLD: f64 = 1e-12;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Amplitudes of a state of two `dim`-level systems.
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteVector {
    dim: usize,
    amplitudes: DVector<Complex64>,
}

impl BipartiteVector {
    pub fn from_amplitudes(dim: usize, amplitudes: DVector<Complex64>) -> Result<Self> {
        if dim == 0 || amplitudes.len() != dim * dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{} amplitudes", dim * dim),
                got: format!("{}", amplitudes.len()),
            });
        }
        Ok(Self { dim, amplitudes })
    }

    /// The product basis vector `|i, j>>`.
    pub fn basis(dim: usize, i: usize, j: usize) -> Self {
        let mut amplitudes = DVector::zeros(dim * dim);
        amplitudes[i * dim + j] = ONE;
        Self { dim, amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<Complex64> {
        self.amplitudes
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.amplitudes[i * self.dim + j]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `<<self|other>>`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes.dotc(&other.amplitudes)
    }
}

pub fn vec(m: &ComplexMatrix) -> Result<BipartiteVector> {
    ensure_square(m)?;
    let d = m.nrows();
    let amplitudes = DVector::from_fn(d * d, |k, _| m[(k / d, k % d)]);
    Ok(BipartiteVector { dim: d, amplitudes })
}

pub fn unvec(v: &BipartiteVector) -> ComplexMatrix {
    let d = v.dim;
    ComplexMatrix::from_fn(d, d, |i, j| v.amplitudes[i * d + j])
}

/// Projector `|v>><<v|` as a `d^2 x d^2` matrix.
pub fn outer(v: &BipartiteVector) -> ComplexMatrix {
    &v.amplitudes * v.amplitudes.adjoint()
}

pub fn hs_norm(m: &ComplexMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Tr(M^dag N)`.
pub fn hs_inner(m: &ComplexMatrix, n: &ComplexMatrix) -> Result<Complex64> {
    ensure_same_shape(m, n)?;
    Ok(m.iter().zip(n.iter()).map(|(a, b)| a.conj() * b).sum())
}

pub fn trace(m: &ComplexMatrix) -> Complex64 {
    m.diagonal().sum()
}

/// `(Tr_2 X)_ab = sum_k X_(a,k),(b,k)` for `X` acting on a `d^2`-dimensional
/// space.
pub fn partial_trace_2(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    ensure_square(x)?;
    let d = square_root_dim(x.nrows())?;
    Ok(ComplexMatrix::from_fn(d, d, |a, b| {
        (0..d).map(|k| x[(a * d + k, b * d + k)]).sum()
    }))
}

/// `(Tr_1 X)_ab = sum_k X_(k,a),(k,b)`.
pub fn partial_trace_1(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    ensure_square(x)?;
    let d = square_root_dim(x.nrows())?;
    Ok(ComplexMatrix::from_fn(d, d, |a, b| {
        (0..d).map(|k| x[(k * d + a, k * d + b)]).sum()
    }))
}

pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

pub fn conj(m: &ComplexMatrix) -> ComplexMatrix {
    m.map(|z| z.conj())
}

pub fn transpose(m: &ComplexMatrix) -> ComplexMatrix {
    m.transpose()
}

pub fn identity(d: usize) -> ComplexMatrix {
    ComplexMatrix::identity(d, d)
}

fn one_norm(m: &ComplexMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Reciprocal 1-norm condition number `1 / (|M|_1 |M^-1|_1)`, or zero when
/// the LU factorization is singular.
pub fn reciprocal_condition(m: &ComplexMatrix) -> Result<f64> {
    ensure_square(m)?;
    Ok(match m.clone().lu().try_inverse() {
        Some(inv) => {
            let denom = one_norm(m) * one_norm(&inv);
            if denom.is_finite() && denom > 0.0 {
                1.0 / denom
            } else {
                0.0
            }
        }
        None => 0.0,
    })
}

/// Inverse via partially pivoted LU, refusing ill-conditioned input.
pub fn inverse(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    ensure_square(m)?;
    let inv = m.clone().lu().try_inverse().ok_or(Error::NonInvertibleEntangler {
        rcond: 0.0,
        threshold: RCOND_THRESHOLD,
    })?;
    let denom = one_norm(m) * one_norm(&inv);
    let rcond = if denom.is_finite() && denom > 0.0 { 1.0 / denom } else { 0.0 };
    if rcond < RCOND_THRESHOLD || inv.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonInvertibleEntangler {
            rcond,
            threshold: RCOND_THRESHOLD,
        });
    }
    Ok(inv)
}

/// Unit phase `e^{i t}` minimizing `|M - e^{i t} N|_HS` and the minimized
/// distance.
pub fn phase_align(m: &ComplexMatrix, n: &ComplexMatrix) -> Result<(Complex64, f64)> {
    let overlap = hs_inner(n, m)?;
    if hs_norm(n) == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        ONE
    };
    let distance = hs_norm(&(m - n * phase));
    Ok((phase, distance))
}

pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    m.is_square() && max_abs_diff(m, &m.adjoint()) <= tol
}

/// `(M + M^dag) / 2`.
pub fn hermitian_part(m: &ComplexMatrix) -> ComplexMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = ComplexMatrix::from_fn(m.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Largest singular value.
pub fn operator_norm(m: &ComplexMatrix) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn all_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub(crate) fn ensure_square(m: &ComplexMatrix) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

pub(crate) fn ensure_same_shape(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            expected: shape(a.nrows(), a.ncols()),
            got: shape(b.nrows(), b.ncols()),
        })
    }
}

pub(crate) fn square_root_dim(n: usize) -> Result<usize> {
    let d = (n as f64).sqrt().round() as usize;
    if d * d == n && d > 0 {
        Ok(d)
    } else {
        Err(Error::NotPerfectSquare(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_matrix, seeded};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vec_of_identity() {
        let v = vec(&identity(2)).unwrap();
        assert_eq!(v.get(0, 0), ONE);
        assert_eq!(v.get(1, 1), ONE);
        assert_eq!(v.get(0, 1), ZERO);
        assert_eq!(v.get(1, 0), ZERO);
    }

    #[test]
    fn vec_of_single_entry_is_row_first() {
        let mut m = ComplexMatrix::zeros(2, 2);
        m[(0, 1)] = ONE;
        let v = vec(&m).unwrap();
        assert_eq!(v, BipartiteVector::basis(2, 0, 1));
        assert_eq!(v.amplitudes()[1], ONE);
    }

    #[test]
    fn vec_rejects_rectangular() {
        let m = ComplexMatrix::zeros(2, 3);
        assert!(matches!(vec(&m), Err(Error::NotSquare { rows: 2, cols: 3 })));
    }

    #[test]
    fn maximally_entangled_unvec() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = DVector::zeros(4);
        amps[0] = c(s, 0.0);
        amps[3] = c(s, 0.0);
        let m = unvec(&BipartiteVector::from_amplitudes(2, amps).unwrap());
        assert!(max_abs_diff(&m, &identity(2).scale(s)) < 1e-15);
    }

    #[test]
    fn kron_vec_identity_brute_force() {
        // (A (x) C^T) vec(B) = vec(A B C), checked entry by entry.
        let mut rng = seeded(7);
        let a = random_matrix(3, &mut rng);
        let b = random_matrix(3, &mut rng);
        let cm = random_matrix(3, &mut rng);
        let lhs = kron(&a, &cm.transpose()) * vec(&b).unwrap().amplitudes();
        for i in 0..3 {
            for j in 0..3 {
                let mut want = ZERO;
                for k in 0..3 {
                    for l in 0..3 {
                        want += a[(i, k)] * b[(k, l)] * cm[(l, j)];
                    }
                }
                assert!((lhs[i * 3 + j] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hs_norm_values() {
        assert!((hs_norm(&identity(3)) - 3f64.sqrt()).abs() < 1e-15);
        let mut rng = seeded(1);
        let m = random_matrix(4, &mut rng);
        let brute: f64 = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].re.powi(2) + m[(i, j)].im.powi(2))
            .sum();
        assert!((hs_norm(&m).powi(2) - brute).abs() < 1e-12);
        let self_inner = hs_inner(&m, &m).unwrap();
        assert!((self_inner.re - brute).abs() < 1e-12 && self_inner.im.abs() < 1e-12);
    }

    #[test]
    fn hs_inner_shape_mismatch() {
        assert!(hs_inner(&identity(2), &identity(3)).is_err());
    }

    #[test]
    fn partial_trace_of_product() {
        let mut rng = seeded(3);
        let rho = random_matrix(3, &mut rng);
        let sigma = random_matrix(3, &mut rng);
        let pt = partial_trace_2(&kron(&rho, &sigma)).unwrap();
        assert!(max_abs_diff(&pt, &(&rho * trace(&sigma))) < 1e-12);
    }

    #[test]
    fn partial_trace_of_unnormalized_maximally_entangled() {
        let v = vec(&identity(2)).unwrap();
        let x = outer(&v);
        // Brute force: sum_k X[(a,k),(b,k)]
        let mut want = ComplexMatrix::zeros(2, 2);
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..2 {
                    want[(a, b)] += x[(a * 2 + k, b * 2 + k)];
                }
            }
        }
        let pt = partial_trace_2(&x).unwrap();
        assert!(max_abs_diff(&pt, &want) < 1e-15);
        assert!(max_abs_diff(&pt, &identity(2)) < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_non_square_dimension() {
        assert!(matches!(
            partial_trace_2(&ComplexMatrix::zeros(3, 3)),
            Err(Error::NotPerfectSquare(3))
        ));
    }

    #[test]
    fn diagonal_inverse() {
        let b = 0.75f64.sqrt() * 0.5;
        let m = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![c(0.5, 0.0), c(b, 0.0)]));
        let inv = inverse(&m).unwrap();
        assert!((inv[(0, 0)] - c(2.0, 0.0)).norm() < 1e-14);
        assert!((inv[(1, 1)] - c(1.0 / b, 0.0)).norm() < 1e-12);
        assert_eq!(inv[(0, 1)], ZERO);
    }

    #[test]
    fn kron_of_identities() {
        assert_eq!(kron(&identity(2), &identity(2)), identity(4));
    }

    #[test]
    fn inverse_residual_random() {
        let mut rng = seeded(11);
        let m = random_matrix(4, &mut rng) + identity(4).scale(3.0);
        let inv = inverse(&m).unwrap();
        assert!(max_abs_diff(&(&m * &inv), &identity(4)) < 1e-10);
        assert!(max_abs_diff(&(&inv * &m), &identity(4)) < 1e-10 * 4.0);
    }

    #[test]
    fn singular_matrices_are_refused() {
        let mut m = identity(3);
        m[(2, 2)] = ZERO;
        assert!(matches!(inverse(&m), Err(Error::NonInvertibleEntangler { .. })));
        let mut near = identity(3);
        near[(2, 2)] = c(1e-14, 0.0);
        assert!(matches!(inverse(&near), Err(Error::NonInvertibleEntangler { .. })));
    }

    #[test]
    fn phase_align_cases() {
        let mut rng = seeded(5);
        let n = random_matrix(3, &mut rng);
        let (phase, dist) = phase_align(&n.scale(1.0).map(|z| z * Complex64::i()), &n).unwrap();
        assert!((phase - Complex64::i()).norm() < 1e-12 && dist < 1e-12);
        let (phase, dist) = phase_align(&n, &n).unwrap();
        assert!((phase - ONE).norm() < 1e-12 && dist < 1e-12);
        assert!(matches!(
            phase_align(&n, &ComplexMatrix::zeros(3, 3)),
            Err(Error::ZeroMatrix)
        ));
    }

    #[test]
    fn phase_align_beats_probe_scan() {
        let mut rng = seeded(9);
        let m = random_matrix(3, &mut rng);
        let n = random_matrix(3, &mut rng);
        let (_, best) = phase_align(&m, &n).unwrap();
        for k in 0..100 {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 100.0;
            let probe = hs_norm(&(&m - n.map(|z| z * Complex64::from_polar(1.0, t))));
            assert!(best <= probe + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn vec_unvec_bijection(d in 1usize..=32, seed in any::<u64>()) {
            let m = random_matrix(d, &mut seeded(seed));
            let v = vec(&m).unwrap();
            prop_assert_eq!(unvec(&v), m.clone());
            prop_assert!((v.norm() - hs_norm(&m)).abs() < 1e-12 * (1.0 + hs_norm(&m)));
        }

        #[test]
        fn local_action_is_matrix_product(d in 1usize..=6, seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let a = random_matrix(d, &mut rng);
            let psi = random_matrix(d, &mut rng);
            let lhs = kron(&a, &identity(d)) * vec(&psi).unwrap().amplitudes();
            let rhs = vec(&(&a * &psi)).unwrap();
            let diff = (lhs - rhs.amplitudes()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(diff < 1e-10 * d as f64);
        }

        #[test]
        fn partial_trace_linear_and_trace_preserving(d in 1usize..=5, seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let x = random_matrix(d * d, &mut rng);
            let y = random_matrix(d * d, &mut rng);
            let alpha = c(0.3, -1.2);
            let lhs = partial_trace_2(&(&x + y.map(|z| z * alpha))).unwrap();
            let rhs = partial_trace_2(&x).unwrap() + partial_trace_2(&y).unwrap().map(|z| z * alpha);
            prop_assert!(max_abs_diff(&lhs, &rhs) < 1e-10 * d as f64);
            prop_assert!((trace(&partial_trace_2(&x).unwrap()) - trace(&x)).norm() < 1e-10 * d as f64);
        }

        #[test]
        fn phase_align_recovers_global_phase(alpha in -3.1f64..3.1, seed in any::<u64>()) {
            let m = random_matrix(3, &mut seeded(seed));
            let rotated = m.map(|z| z * Complex64::from_polar(1.0, alpha));
            let (phase, dist) = phase_align(&rotated, &m).unwrap();
            prop_assert!((phase - Complex64::from_polar(1.0, alpha)).norm() < 1e-10);
            prop_assert!(dist < 1e-10);
        }
    }
}
