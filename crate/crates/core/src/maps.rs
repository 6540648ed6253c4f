//! Quantum operations, Choi matrices and the physical states of the optical
//! experiment.
//!
//! The Choi matrix uses the unnormalized maximally entangled vector
//! `|I>> = sum_i |i,i>`, `R(I) = sum_n vec(K_n) vec(K_n)^dag`, so the map is
//! recovered as `E(rho) = Tr_2[(I (x) rho^T) R(I)]` with no dimension factors.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{shape, Error, Result};
use crate::linalg::{
    self, all_finite, conj, ensure_square, hermitian_eigen, identity, inverse, kron, operator_norm,
    partial_trace_2, square_root_dim, transpose, vec, ComplexMatrix, ONE, ZERO,
};
use crate::special::{laguerre, ln_factorial};

/// Numerical slack on the contraction and trace-decreasing bounds.
pub const BOUND_TOLERANCE: f64 = 1e-10;
/// Relative slack on Choi positivity, in units of `Tr R`.
pub const PSD_TOLERANCE: f64 = 1e-8;
/// Extra Fock levels used when exponentiating a generator before cropping.
pub const GUARD_BAND: usize = 8;
/// Truncation deficit above which a state carries a warning.
pub const DEFAULT_DEFICIT_BOUND: f64 = 1e-3;

/// Single-Kraus operation `rho -> A rho A^dag` with `|A| <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PureOperation {
    a: ComplexMatrix,
}

impl PureOperation {
    pub fn new(a: ComplexMatrix) -> Result<Self> {
        ensure_square(&a)?;
        let norm = operator_norm(&a);
        if norm > 1.0 + BOUND_TOLERANCE {
            return Err(Error::NotContraction(norm));
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// `rho -> sum_n K_n rho K_n^dag` with `sum_n K_n^dag K_n <= I`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausMap {
    kraus: Vec<ComplexMatrix>,
}

impl KrausMap {
    pub fn new(kraus: Vec<ComplexMatrix>) -> Result<Self> {
        let first = kraus
            .first()
            .ok_or_else(|| Error::InvalidArgument("a Kraus map needs at least one operator".into()))?;
        ensure_square(first)?;
        let d = first.nrows();
        for k in &kraus {
            if k.shape() != (d, d) {
                return Err(Error::ShapeMismatch {
                    expected: shape(d, d),
                    got: shape(k.nrows(), k.ncols()),
                });
            }
        }
        let map = Self { kraus };
        let slack = identity(d) - map.effect();
        let (eigs, _) = hermitian_eigen(&slack);
        if eigs[0] < -BOUND_TOLERANCE {
            return Err(Error::NotTraceDecreasing(eigs[0]));
        }
        Ok(map)
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.kraus
    }

    pub fn dim(&self) -> usize {
        self.kraus[0].nrows()
    }

    /// `sum_n K_n^dag K_n`.
    pub fn effect(&self) -> ComplexMatrix {
        let d = self.dim();
        self.kraus
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k)
    }

    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        let d = self.dim();
        if rho.shape() != (d, d) {
            return Err(Error::ShapeMismatch {
                expected: shape(d, d),
                got: shape(rho.nrows(), rho.ncols()),
            });
        }
        Ok(self
            .kraus
            .iter()
            .fold(ComplexMatrix::zeros(d, d), |acc, k| acc + k * rho * k.adjoint()))
    }
}

impl From<PureOperation> for KrausMap {
    fn from(op: PureOperation) -> Self {
        KrausMap { kraus: vec![op.a] }
    }
}

/// Either kind of operation the experiment can probe.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumOperation {
    Pure(PureOperation),
    Kraus(KrausMap),
}

impl QuantumOperation {
    pub fn dim(&self) -> usize {
        match self {
            QuantumOperation::Pure(op) => op.dim(),
            QuantumOperation::Kraus(map) => map.dim(),
        }
    }

    pub fn kraus_operators(&self) -> Vec<&ComplexMatrix> {
        match self {
            QuantumOperation::Pure(op) => vec![op.matrix()],
            QuantumOperation::Kraus(map) => map.operators().iter().collect(),
        }
    }

    /// Probabilities `|K_n psi|_HS^2` of each Kraus branch on the entangler.
    pub fn branch_probabilities(&self, psi: &ComplexMatrix) -> Vec<f64> {
        self.kraus_operators()
            .into_iter()
            .map(|k| linalg::hs_norm(&(k * psi)).powi(2))
            .collect()
    }

    /// Occurrence probability `p(psi) = Tr R(psi)`.
    pub fn occurrence_probability(&self, psi: &ComplexMatrix) -> f64 {
        self.branch_probabilities(psi).iter().sum()
    }
}

/// Hermitian `d^2 x d^2` matrix representing a map through `R(I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    r: ComplexMatrix,
    dim: usize,
}

impl ChoiMatrix {
    /// Checked constructor: Hermitian to 1e-10 and positive to
    /// `-1e-8 Tr R`.
    pub fn new(r: ComplexMatrix) -> Result<Self> {
        let choi = Self::from_hermitian(r)?;
        let tol = PSD_TOLERANCE * choi.trace().max(1.0);
        let min = choi.min_eigenvalue();
        if min < -tol {
            return Err(Error::NotCompletelyPositive {
                eigenvalue: min,
                tolerance: tol,
            });
        }
        Ok(choi)
    }

    /// Accepts any Hermitian matrix; statistical reconstructions need not be
    /// positive.
    pub fn from_hermitian(r: ComplexMatrix) -> Result<Self> {
        ensure_square(&r)?;
        let dim = square_root_dim(r.nrows())?;
        let scale = r.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if !linalg::is_hermitian(&r, 1e-10 * scale) {
            return Err(Error::InvalidArgument("Choi matrix is not Hermitian".into()));
        }
        Ok(Self { r, dim })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.r
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.r
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.r).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.r).0[0]
    }

    /// `<<i,j| R |l,k>>`.
    pub fn element(&self, i: usize, j: usize, l: usize, k: usize) -> Complex64 {
        self.r[(i * self.dim + j, l * self.dim + k)]
    }
}

/// Diagonal entangler of two modes from parametric down-conversion of vacuum.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinBeamState {
    pub nbar: f64,
    pub dim_cut: usize,
    /// Real positive `lambda = sqrt(nbar / (nbar + 1))`.
    pub lambda: f64,
    pub psi: ComplexMatrix,
    /// `1 - sum_{n < dim_cut} psi_nn^2`.
    pub deficit: f64,
    pub warning: Option<String>,
}

impl TwinBeamState {
    pub fn amplitude(nbar: f64, n: usize) -> f64 {
        let lambda_sq = nbar / (nbar + 1.0);
        ((1.0 - lambda_sq) * lambda_sq.powi(n as i32)).sqrt()
    }

    /// Reduced density matrix of either beam (thermal, diagonal).
    pub fn reduced_state(&self) -> ComplexMatrix {
        &self.psi * self.psi.adjoint()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementOp {
    pub z: Complex64,
    pub dim_cut: usize,
    pub matrix: ComplexMatrix,
}

/// `dim_cut` default `max(16, ceil(8 (nbar + 1)))`.
pub fn default_dim_cut(nbar: f64) -> usize {
    16usize.max((8.0 * (nbar + 1.0)).ceil() as usize)
}

pub fn twin_beam(nbar: f64, dim_cut: usize) -> Result<TwinBeamState> {
    twin_beam_with_bound(nbar, dim_cut, DEFAULT_DEFICIT_BOUND)
}

pub fn twin_beam_with_bound(nbar: f64, dim_cut: usize, deficit_bound: f64) -> Result<TwinBeamState> {
    if !(nbar >= 0.0 && nbar.is_finite()) {
        return Err(Error::InvalidArgument(format!("mean photon number {nbar} must be >= 0")));
    }
    if dim_cut == 0 {
        return Err(Error::InvalidArgument("dim_cut must be positive".into()));
    }
    let diag = DVector::from_fn(dim_cut, |n, _| Complex64::new(TwinBeamState::amplitude(nbar, n), 0.0));
    let kept: f64 = diag.iter().map(|z| z.norm_sqr()).sum();
    let deficit = (1.0 - kept).max(0.0);
    let warning = (deficit > deficit_bound).then(|| {
        format!("twin-beam truncation deficit {deficit:.3e} exceeds {deficit_bound:.1e}; raise dim_cut")
    });
    Ok(TwinBeamState {
        nbar,
        dim_cut,
        lambda: (nbar / (nbar + 1.0)).sqrt(),
        psi: ComplexMatrix::from_diagonal(&diag),
        deficit,
        warning,
    })
}

/// Annihilation operator truncated to `n` levels.
pub fn annihilation(n: usize) -> ComplexMatrix {
    let mut a = ComplexMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    a
}

/// `exp(z a^dag - z^* a)` exponentiated on `dim_cut + GUARD_BAND` levels and
/// cropped to `dim_cut`.
pub fn displacement_matrix(z: Complex64, dim_cut: usize) -> Result<DisplacementOp> {
    if dim_cut < 2 {
        return Err(Error::InvalidArgument("displacement needs dim_cut >= 2".into()));
    }
    let big = dim_cut + GUARD_BAND;
    let a = annihilation(big);
    let generator = a.adjoint().map(|x| x * z) - a.map(|x| x * z.conj());
    let full = generator.exp();
    let matrix = full.view((0, 0), (dim_cut, dim_cut)).into_owned();
    Ok(DisplacementOp { z, dim_cut, matrix })
}

/// Exact `<n|D(z)|m>` in infinite dimension:
/// `sqrt(m!/n!) z^(n-m) e^{-|z|^2/2} L_m^(n-m)(|z|^2)` for `n >= m`, and
/// `sqrt(n!/m!) (-z^*)^(m-n) e^{-|z|^2/2} L_n^(m-n)(|z|^2)` otherwise.
pub fn displacement_element(z: Complex64, n: usize, m: usize) -> Complex64 {
    let r2 = z.norm_sqr();
    let (lo, hi, base) = if n >= m { (m, n, z) } else { (n, m, -z.conj()) };
    let d = hi - lo;
    let scale = (0.5 * (ln_factorial(lo) - ln_factorial(hi)) - 0.5 * r2).exp();
    base.powu(d as u32) * (scale * laguerre(lo, d as f64, r2))
}

/// `|psi>> -> (A (x) I)|psi>> / |A psi|_HS`; returns `(phi, p)`.
pub fn apply_pure(op: &PureOperation, psi: &ComplexMatrix) -> Result<(ComplexMatrix, f64)> {
    if op.dim() != psi.nrows() || !psi.is_square() {
        return Err(Error::ShapeMismatch {
            expected: shape(op.dim(), op.dim()),
            got: shape(psi.nrows(), psi.ncols()),
        });
    }
    let out = op.matrix() * psi;
    let norm = linalg::hs_norm(&out);
    let p = norm * norm;
    if !(p > 0.0) || p < 1e-300 {
        return Err(Error::AnnihilatingOperation(p));
    }
    Ok((out.unscale(norm), p))
}

/// `A = phi psi^-1 sqrt(p)`.
pub fn reconstruct_pure(phi: &ComplexMatrix, psi: &ComplexMatrix, p: f64) -> Result<ComplexMatrix> {
    if !(p > 0.0 && p <= 1.0 + BOUND_TOLERANCE) {
        return Err(Error::InvalidArgument(format!("occurrence probability {p} outside (0, 1]")));
    }
    linalg::ensure_same_shape(phi, psi)?;
    let inv = inverse(psi)?;
    Ok((phi * inv).scale(p.sqrt()))
}

/// `R(psi) = sum_n (K_n (x) I) |psi>><<psi| (K_n (x) I)^dag`.
pub fn apply_kraus_bipartite(map: &KrausMap, psi: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = map.dim();
    if psi.shape() != (d, d) {
        return Err(Error::ShapeMismatch {
            expected: shape(d, d),
            got: shape(psi.nrows(), psi.ncols()),
        });
    }
    let mut r = ComplexMatrix::zeros(d * d, d * d);
    for k in map.operators() {
        let v = vec(&(k * psi))?;
        r += linalg::outer(&v);
    }
    Ok(r)
}

/// `R(I) = (I (x) psi^-T) R(psi) (I (x) psi^-*)`.
pub fn choi_normalize(r_psi: &ComplexMatrix, psi: &ComplexMatrix) -> Result<ChoiMatrix> {
    ensure_square(psi)?;
    let d = psi.nrows();
    if r_psi.shape() != (d * d, d * d) {
        return Err(Error::ShapeMismatch {
            expected: shape(d * d, d * d),
            got: shape(r_psi.nrows(), r_psi.ncols()),
        });
    }
    let inv = inverse(psi)?;
    let left = kron(&identity(d), &transpose(&inv));
    let right = kron(&identity(d), &conj(&inv));
    let r = &left * r_psi * &right;
    ChoiMatrix::from_hermitian(linalg::hermitian_part(&r))
}

/// `E(rho) = Tr_2[(I (x) rho^T) R(I)]`.
pub fn map_from_choi(r: &ChoiMatrix, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = r.dim();
    if rho.shape() != (d, d) {
        return Err(Error::ShapeMismatch {
            expected: shape(d, d),
            got: shape(rho.nrows(), rho.ncols()),
        });
    }
    partial_trace_2(&(kron(&identity(d), &transpose(rho)) * r.matrix()))
}

pub fn kraus_to_choi(map: &KrausMap) -> ChoiMatrix {
    let d = map.dim();
    let mut r = ComplexMatrix::zeros(d * d, d * d);
    for k in map.operators() {
        let v = vec(k).expect("Kraus operators are square");
        r += linalg::outer(&v);
    }
    ChoiMatrix {
        r: linalg::hermitian_part(&r),
        dim: d,
    }
}

/// Kraus operators `sqrt(mu) unvec(v)` from the eigendecomposition of `R`.
/// Eigenvalues in `(-1e-8 Tr R, 0)` are clipped; more negative ones fail.
pub fn choi_to_kraus(r: &ChoiMatrix) -> Result<KrausMap> {
    let d = r.dim();
    let (eigs, vecs) = hermitian_eigen(r.matrix());
    let tol = PSD_TOLERANCE * r.trace().abs().max(1.0);
    if eigs[0] < -tol {
        return Err(Error::NotCompletelyPositive {
            eigenvalue: eigs[0],
            tolerance: tol,
        });
    }
    let cutoff = tol;
    let mut kraus: Vec<ComplexMatrix> = eigs
        .iter()
        .enumerate()
        .filter(|(_, &mu)| mu > cutoff)
        .map(|(c, &mu)| {
            let col = vecs.column(c);
            ComplexMatrix::from_fn(d, d, |i, j| col[i * d + j] * mu.sqrt())
        })
        .collect();
    if kraus.is_empty() {
        kraus.push(ComplexMatrix::zeros(d, d));
    }
    // Statistical Choi estimates can overshoot the trace-decreasing bound
    // slightly; report that rather than silently rescaling.
    KrausMap::new(kraus)
}

/// Maximally entangled normalized entangler `I / sqrt(d)`.
pub fn maximally_entangled(d: usize) -> ComplexMatrix {
    identity(d).unscale((d as f64).sqrt())
}

/// Pauli matrices `(sigma_x, sigma_y, sigma_z)`.
pub fn pauli() -> [ComplexMatrix; 3] {
    let i = Complex64::i();
    [
        ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        ComplexMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO]),
        ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    ]
}

pub fn is_valid_density(rho: &ComplexMatrix) -> bool {
    all_finite(rho) && linalg::is_hermitian(rho, 1e-10) && hermitian_eigen(rho).0[0] > -1e-10
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hs_norm, max_abs_diff, phase_align};
    use crate::random::{random_contraction, random_density, random_entangler, random_kraus_map, seeded};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn projector0(d: usize) -> ComplexMatrix {
        let mut p = ComplexMatrix::zeros(d, d);
        p[(0, 0)] = ONE;
        p
    }

    #[test]
    fn identity_operation_keeps_state() {
        let mut rng = seeded(1);
        let psi = random_entangler(3, &mut rng);
        let (phi, p) = apply_pure(&PureOperation::new(identity(3)).unwrap(), &psi).unwrap();
        assert!(max_abs_diff(&phi, &psi) < 1e-14);
        assert!((p - 1.0).abs() < 1e-14);
    }

    #[test]
    fn projector_on_maximally_entangled() {
        let op = PureOperation::new(projector0(2)).unwrap();
        let (phi, p) = apply_pure(&op, &maximally_entangled(2)).unwrap();
        assert!(max_abs_diff(&phi, &projector0(2)) < 1e-15);
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn annihilating_operation_is_an_error() {
        let mut a = ComplexMatrix::zeros(2, 2);
        a[(0, 1)] = ONE;
        let psi = ComplexMatrix::from_diagonal(&DVector::from_vec(vec![ONE, ZERO]));
        let op = PureOperation::new(a).unwrap();
        assert!(matches!(apply_pure(&op, &psi), Err(Error::AnnihilatingOperation(_))));
    }

    #[test]
    fn contraction_bound_enforced() {
        assert!(matches!(
            PureOperation::new(identity(2).scale(1.01)),
            Err(Error::NotContraction(_))
        ));
        assert!(matches!(
            KrausMap::new(vec![identity(2), identity(2).scale(0.2)]),
            Err(Error::NotTraceDecreasing(_))
        ));
    }

    #[test]
    fn displacement_on_truncated_twin_beam_is_nearly_unitary() {
        // Oracle: the same probability at a cutoff large enough that truncation is irrelevant.
        let exact = {
            let tb = twin_beam(5.0, 160).unwrap();
            let d = displacement_matrix(c(1.0), 160).unwrap();
            apply_pure(&PureOperation::new(d.matrix).unwrap(), &tb.psi).unwrap().1
        };
        assert!((exact - 1.0).abs() < 1e-10);
        let tb = twin_beam_with_bound(5.0, 16, 1.0).unwrap();
        let d = displacement_matrix(c(1.0), 16).unwrap();
        let (_, p) = apply_pure(&PureOperation::new(d.matrix).unwrap(), &tb.psi).unwrap();
        // Sixteen levels lose the twin-beam tail and the displaced leakage out
        // of the top levels: about ten percent.
        assert!(p < exact && (p - 0.9015).abs() < 1e-3, "p = {p}");
        let tb = twin_beam(5.0, default_dim_cut(5.0)).unwrap();
        let d = displacement_matrix(c(1.0), tb.dim_cut).unwrap();
        let (_, p) = apply_pure(&PureOperation::new(d.matrix).unwrap(), &tb.psi).unwrap();
        assert!((p - exact).abs() < 1e-3, "p = {p}");
    }

    #[test]
    fn reconstruct_roundtrips() {
        let mut rng = seeded(2);
        let psi = random_entangler(3, &mut rng);
        assert!(max_abs_diff(&reconstruct_pure(&psi, &psi, 1.0).unwrap(), &identity(3)) < 1e-12);
        for _ in 0..10 {
            let a = random_contraction(4, 0.9, &mut rng);
            let psi = random_entangler(4, &mut rng);
            let (phi, p) = apply_pure(&PureOperation::new(a.clone()).unwrap(), &psi).unwrap();
            let back = reconstruct_pure(&phi, &psi, p).unwrap();
            assert!(phase_align(&back, &a).unwrap().1 < 1e-10);
        }
    }

    #[test]
    fn reconstruct_displacement_through_twin_beam() {
        // Oracle: exact displacement at twice the cutoff.
        let tb = twin_beam(3.0, 32).unwrap();
        let d = displacement_matrix(c(1.0), 32).unwrap();
        let truth = displacement_matrix(c(1.0), 64).unwrap();
        let (phi, p) = apply_pure(&PureOperation::new(d.matrix).unwrap(), &tb.psi).unwrap();
        let a = reconstruct_pure(&phi, &tb.psi, p).unwrap();
        let window = |m: &ComplexMatrix| m.view((0, 0), (9, 9)).into_owned();
        let (_, dist) = phase_align(&window(&a), &window(&truth.matrix)).unwrap();
        assert!(dist < 1e-6, "dist {dist}");
    }

    #[test]
    fn reconstruct_rejects_singular_entangler() {
        let psi = projector0(2);
        assert!(matches!(
            reconstruct_pure(&psi, &psi, 1.0),
            Err(Error::NonInvertibleEntangler { .. })
        ));
    }

    #[test]
    fn kraus_bipartite_examples() {
        let me = maximally_entangled(2);
        let r = apply_kraus_bipartite(&KrausMap::new(vec![identity(2)]).unwrap(), &me).unwrap();
        let want = linalg::outer(&vec(&me).unwrap());
        assert!(max_abs_diff(&r, &want) < 1e-15);
        assert!((linalg::trace(&r).re - 1.0).abs() < 1e-15);

        let [sx, _, _] = pauli();
        let h = 0.5f64.sqrt();
        let map = KrausMap::new(vec![identity(2).scale(h), sx.scale(h)]).unwrap();
        let r = apply_kraus_bipartite(&map, &me).unwrap();
        // Direct construction: mixture of |I>> and |sigma_x>> projectors.
        let v1 = vec(&me).unwrap();
        let v2 = vec(&(&sx * &me)).unwrap();
        let want = (linalg::outer(&v1) + linalg::outer(&v2)).scale(0.5);
        assert!(max_abs_diff(&r, &want) < 1e-15);
        let (eigs, _) = hermitian_eigen(&r);
        assert_eq!(eigs.iter().filter(|&&e| e > 1e-12).count(), 2);
        assert!((linalg::trace(&r).re - 1.0).abs() < 1e-14);

        let r = apply_kraus_bipartite(&KrausMap::new(vec![identity(2).scale(0.5)]).unwrap(), &me).unwrap();
        assert!((linalg::trace(&r).re - 0.25).abs() < 1e-15);
    }

    #[test]
    fn choi_normalize_identity_on_maximally_entangled() {
        let me = maximally_entangled(3);
        let r_psi = apply_kraus_bipartite(&KrausMap::new(vec![identity(3)]).unwrap(), &me).unwrap();
        let r = choi_normalize(&r_psi, &me).unwrap();
        let want = linalg::outer(&vec(&identity(3)).unwrap());
        assert!(max_abs_diff(r.matrix(), &want) < 1e-13);
        assert!((r.trace() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn choi_normalize_on_twin_beam_matches_direct_choi() {
        let mut rng = seeded(4);
        let tb = twin_beam_with_bound(1.0, 6, 1.0).unwrap();
        let map = random_kraus_map(6, 2, &mut rng);
        let r_psi = apply_kraus_bipartite(&map, &tb.psi).unwrap();
        let r = choi_normalize(&r_psi, &tb.psi).unwrap();
        let direct = kraus_to_choi(&map);
        let mut worst: f64 = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                for l in 0..5 {
                    for k in 0..5 {
                        worst = worst.max((r.element(i, j, l, k) - direct.element(i, j, l, k)).norm());
                    }
                }
            }
        }
        assert!(worst < 1e-8, "worst {worst}");
    }

    #[test]
    fn choi_normalize_diagonal_index_formula() {
        let mut rng = seeded(5);
        let tb = twin_beam_with_bound(2.0, 4, 1.0).unwrap();
        let map = random_kraus_map(4, 3, &mut rng);
        let r_psi = apply_kraus_bipartite(&map, &tb.psi).unwrap();
        let r = choi_normalize(&r_psi, &tb.psi).unwrap();
        let d = 4;
        for i in 0..d {
            for j in 0..d {
                for l in 0..d {
                    for k in 0..d {
                        let want = r_psi[(i * d + j, l * d + k)] / (tb.psi[(j, j)] * tb.psi[(k, k)].conj());
                        assert!((r.element(i, j, l, k) - want).norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn map_from_choi_examples() {
        let mut rng = seeded(6);
        let rho = random_density(3, &mut rng);
        let id = kraus_to_choi(&KrausMap::new(vec![identity(3)]).unwrap());
        assert!(max_abs_diff(&map_from_choi(&id, &rho).unwrap(), &rho) < 1e-14);

        let map = random_kraus_map(3, 2, &mut rng);
        let choi = kraus_to_choi(&map);
        for _ in 0..5 {
            let rho = random_density(3, &mut rng);
            let direct = map.apply(&rho).unwrap();
            assert!(max_abs_diff(&map_from_choi(&choi, &rho).unwrap(), &direct) < 1e-12);
        }
        let out = map_from_choi(&choi, &identity(3).unscale(3.0)).unwrap();
        assert!((linalg::trace(&out).re - 1.0).abs() < 1e-12);
        assert!(map_from_choi(&choi, &identity(2)).is_err());
    }

    #[test]
    fn choi_kraus_conversions() {
        let id = kraus_to_choi(&KrausMap::new(vec![identity(2)]).unwrap());
        let (eigs, _) = hermitian_eigen(id.matrix());
        let want = [0.0, 0.0, 0.0, 2.0];
        for (e, w) in eigs.iter().zip(want) {
            assert!((e - w).abs() < 1e-12);
        }

        let mut rng = seeded(8);
        let map = random_kraus_map(3, 2, &mut rng);
        let back = choi_to_kraus(&kraus_to_choi(&map)).unwrap();
        for _ in 0..20 {
            let rho = random_density(3, &mut rng);
            let a = map.apply(&rho).unwrap();
            let b = back.apply(&rho).unwrap();
            assert!(max_abs_diff(&a, &b) < 1e-10);
        }

        let mut bad = kraus_to_choi(&KrausMap::new(vec![identity(2).scale(0.5)]).unwrap()).into_matrix();
        // Push one eigenvalue to -0.1 along a direction orthogonal to |I>>.
        let v = vec(&pauli()[2]).unwrap();
        bad -= linalg::outer(&v).scale(0.1 / 2.0);
        let choi = ChoiMatrix::from_hermitian(bad).unwrap();
        assert!((choi.min_eigenvalue() + 0.1).abs() < 1e-12);
        assert!(matches!(choi_to_kraus(&choi), Err(Error::NotCompletelyPositive { .. })));
        assert!(ChoiMatrix::new(choi.into_matrix()).is_err());
    }

    #[test]
    fn displacement_examples() {
        let d0 = displacement_matrix(ZERO, 10).unwrap();
        assert!(max_abs_diff(&d0.matrix, &identity(10)) < 1e-15);
        let d = displacement_matrix(c(1.0), 24).unwrap();
        assert!((d.matrix[(0, 0)].re - (-0.5f64).exp()).abs() < 1e-10);
        for n in 0..=8 {
            let want = (-0.5f64).exp() * laguerre(n, 0.0, 1.0);
            assert!((d.matrix[(n, n)] - c(want)).norm() < 1e-6, "n={n}");
        }
    }

    #[test]
    fn displacement_elements_match_exponential() {
        let z = Complex64::new(0.7, -0.4);
        let d = displacement_matrix(z, 40).unwrap();
        for n in 0..12 {
            for m in 0..12 {
                assert!((d.matrix[(n, m)] - displacement_element(z, n, m)).norm() < 1e-10, "{n} {m}");
            }
        }
    }

    #[test]
    fn displacement_is_unitary_on_inner_block() {
        let z = Complex64::new(0.7, -0.4);
        let d = displacement_matrix(z, 30).unwrap();
        let inner = 30 - GUARD_BAND;
        let m = &d.matrix;
        let gram = m.adjoint() * m;
        for i in 0..inner / 2 {
            for j in 0..inner / 2 {
                let want = if i == j { ONE } else { ZERO };
                assert!((gram[(i, j)] - want).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn twin_beam_examples() {
        let vac = twin_beam(0.0, 16).unwrap();
        assert_eq!(vac.psi[(0, 0)], ONE);
        assert!(vac.psi.iter().skip(1).all(|z| *z == ZERO));

        let tb = twin_beam(3.0, 64).unwrap();
        assert!((tb.lambda.powi(2) - 0.75).abs() < 1e-15);
        assert!((tb.psi[(0, 0)].re - 0.5).abs() < 1e-15);
        let rho = tb.reduced_state();
        let mean: f64 = (0..64).map(|n| n as f64 * rho[(n, n)].re).sum();
        assert!((mean - 3.0).abs() < 1e-6);
        // Thermal: diagonal with geometric weights.
        for n in 0..64 {
            let w = 0.25 * 0.75f64.powi(n as i32);
            assert!((rho[(n, n)].re - w).abs() < 1e-14);
        }
        assert!(tb.warning.is_none());

        let short = twin_beam(5.0, 8).unwrap();
        assert!(short.warning.is_some());
        assert!(twin_beam(-1.0, 8).is_err());
    }

    #[test]
    fn pure_kraus_special_case() {
        let mut rng = seeded(12);
        let a = random_contraction(3, 0.8, &mut rng);
        let psi = random_entangler(3, &mut rng);
        let r = apply_kraus_bipartite(&KrausMap::new(vec![a.clone()]).unwrap(), &psi).unwrap();
        let v = vec(&(&a * &psi)).unwrap();
        assert!(max_abs_diff(&r, &linalg::outer(&v)) < 1e-14);
        let (_, p) = apply_pure(&PureOperation::new(a).unwrap(), &psi).unwrap();
        assert!((linalg::trace(&r).re - p).abs() < 1e-14);
        assert!((hs_norm(&psi) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn consistency_triangle_random() {
        let mut rng = seeded(13);
        for d in 2..=4 {
            let map = random_kraus_map(d, 3, &mut rng);
            let psi = random_entangler(d, &mut rng);
            let r_psi = apply_kraus_bipartite(&map, &psi).unwrap();
            let via_entangler = choi_normalize(&r_psi, &psi).unwrap();
            assert!(max_abs_diff(via_entangler.matrix(), kraus_to_choi(&map).matrix()) < 1e-10);
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn trace_decreasing(seed in any::<u64>(), d in 2usize..5, count in 1usize..4, scale in 0.1f64..1.0) {
                let mut rng = seeded(seed);
                let map = random_kraus_map(d, count, &mut rng);
                let scaled = KrausMap::new(map.operators().iter().map(|k| k.scale(scale)).collect()).unwrap();
                let rho = random_density(d, &mut rng);
                prop_assert!(linalg::trace(&scaled.apply(&rho).unwrap()).re <= 1.0 + 1e-10);
                prop_assert!(kraus_to_choi(&scaled).min_eigenvalue() >= -1e-8 * d as f64);
            }
        }
    }
}
