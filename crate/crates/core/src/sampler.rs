//! Monte Carlo generation of measurement records.
//!
//! Two homodyne paths: an exact Gaussian sampler for Gaussian two-mode
//! states, and an exact rejection sampler over truncated Fock amplitudes for
//! arbitrary pure or mixed outputs. A third path draws joint outcomes of a
//! finite quorum from the exact Born table.

use std::f64::consts::TAU;
use std::io::{self, Write};

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, hs_norm, kron, outer, vec, ComplexMatrix};
use crate::maps::QuantumOperation;
use crate::quorum::finite::FiniteQuorum;
use crate::quorum::homodyne::efficiency_noise_variance;
use crate::special::fock_wavefunctions;

/// Joint homodyne record of both modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSample {
    pub phi1: f64,
    pub phi2: f64,
    pub x1: f64,
    pub x2: f64,
    pub herald: bool,
}

impl QuadratureSample {
    /// Record of a trial in which the operation did not occur.
    pub fn unheralded(phi1: f64, phi2: f64) -> Self {
        Self {
            phi1,
            phi2,
            x1: 0.0,
            x2: 0.0,
            herald: false,
        }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.5 && eta <= 1.0 {
        Ok(())
    } else {
        Err(Error::UnphysicalDeconvolution(eta))
    }
}

fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() * TAU
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Two-mode Gaussian state over `(q1, p1, q2, p2)` with `a = q + ip`, so a
/// quadrature at phase `phi` is `q cos(phi) + p sin(phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: [f64; 4],
    pub cov: [[f64; 4]; 4],
}

fn det2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    a * d - b * c
}

impl GaussianState {
    pub fn new(mean: [f64; 4], cov: [[f64; 4]; 4]) -> Result<Self> {
        let state = Self { mean, cov };
        for r in 0..4 {
            for c in 0..4 {
                if !cov[r][c].is_finite() || (cov[r][c] - cov[c][r]).abs() > 1e-12 {
                    return Err(Error::InvalidArgument("covariance must be finite and symmetric".into()));
                }
            }
        }
        // The square root in the symplectic spectrum turns rounding of order
        // 1e-16 v^4 into errors of order 1e-8 v^2 for pure states.
        let [nu_minus, _] = state.symplectic_eigenvalues();
        let scale = (0..4).map(|i| cov[i][i]).fold(0.25, f64::max);
        if nu_minus < 0.25 - 1e-7 * scale * scale {
            return Err(Error::InvalidArgument(format!(
                "covariance violates the uncertainty bound (symplectic eigenvalue {nu_minus} < 1/4)"
            )));
        }
        Ok(state)
    }

    pub fn vacuum() -> Self {
        let mut cov = [[0.0; 4]; 4];
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] = 0.25;
        }
        Self { mean: [0.0; 4], cov }
    }

    /// Symplectic eigenvalues, ascending.
    pub fn symplectic_eigenvalues(&self) -> [f64; 2] {
        let v = &self.cov;
        let det_a = det2(v[0][0], v[0][1], v[1][0], v[1][1]);
        let det_b = det2(v[2][2], v[2][3], v[3][2], v[3][3]);
        let det_c = det2(v[0][2], v[0][3], v[1][2], v[1][3]);
        let delta = det_a + det_b + 2.0 * det_c;
        let m = nalgebra::Matrix4::from_fn(|r, c| v[r][c]);
        let det = m.determinant();
        let disc = (delta * delta - 4.0 * det).max(0.0).sqrt();
        [((delta - disc) / 2.0).max(0.0).sqrt(), ((delta + disc) / 2.0).sqrt()]
    }

    /// Means, variances and covariance of `(X_phi1 (x) 1, 1 (x) X_phi2)`.
    pub fn quadrature_moments(&self, phi1: f64, phi2: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let u = [phi1.cos(), phi1.sin(), 0.0, 0.0];
        let w = [0.0, 0.0, phi2.cos(), phi2.sin()];
        let dot = |a: &[f64; 4], b: &[f64; 4]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let form = |a: &[f64; 4], b: &[f64; 4]| {
            let mut s = 0.0;
            for r in 0..4 {
                for c in 0..4 {
                    s += a[r] * self.cov[r][c] * b[c];
                }
            }
            s
        };
        (
            [dot(&u, &self.mean), dot(&w, &self.mean)],
            [[form(&u, &u), form(&u, &w)], [form(&w, &u), form(&w, &w)]],
        )
    }
}

/// Twin beam with mean photon number `nbar` per mode, mode 1 displaced by
/// `z`.
pub fn displaced_twinbeam_gaussian(z: Complex64, nbar: f64) -> Result<GaussianState> {
    if !(nbar >= 0.0 && nbar.is_finite()) {
        return Err(Error::InvalidArgument(format!("mean photon number {nbar} must be >= 0")));
    }
    let v = (2.0 * nbar + 1.0) / 4.0;
    let c = (nbar * (nbar + 1.0)).sqrt() / 2.0;
    let cov = [
        [v, 0.0, c, 0.0],
        [0.0, v, 0.0, -c],
        [c, 0.0, v, 0.0],
        [0.0, -c, 0.0, v],
    ];
    GaussianState::new([z.re, z.im, 0.0, 0.0], cov)
}

/// Draws `(x1, x2)` at fixed phases, detector noise included.
pub fn sample_gaussian_at<R: Rng + ?Sized>(state: &GaussianState, eta: f64, phi1: f64, phi2: f64, rng: &mut R) -> (f64, f64) {
    let noise = efficiency_noise_variance(eta);
    let (mean, cov) = state.quadrature_moments(phi1, phi2);
    let v1 = cov[0][0] + noise;
    let v2 = cov[1][1] + noise;
    let l11 = v1.sqrt();
    let l21 = cov[0][1] / l11;
    let l22 = (v2 - l21 * l21).max(0.0).sqrt();
    let (g1, g2) = (normal(rng), normal(rng));
    (mean[0] + l11 * g1, mean[1] + l21 * g1 + l22 * g2)
}

/// `n` records with independent uniform phases on both modes.
pub fn sample_quadratures<R: Rng + ?Sized>(state: &GaussianState, eta: f64, n: usize, rng: &mut R) -> Result<Vec<QuadratureSample>> {
    check_eta(eta)?;
    Ok((0..n)
        .map(|_| {
            let phi1 = random_phase(rng);
            let phi2 = random_phase(rng);
            let (x1, x2) = sample_gaussian_at(state, eta, phi1, phi2, rng);
            QuadratureSample {
                phi1,
                phi2,
                x1,
                x2,
                herald: true,
            }
        })
        .collect())
}

/// Test hook: `n` records at fixed phases.
pub fn sample_quadratures_fixed_phase<R: Rng + ?Sized>(
    state: &GaussianState,
    eta: f64,
    phi1: f64,
    phi2: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<QuadratureSample>> {
    check_eta(eta)?;
    Ok((0..n)
        .map(|_| {
            let (x1, x2) = sample_gaussian_at(state, eta, phi1, phi2, rng);
            QuadratureSample {
                phi1,
                phi2,
                x1,
                x2,
                herald: true,
            }
        })
        .collect())
}

const ENVELOPE_CELLS: usize = 2048;
const ENVELOPE_PROBES: usize = 8;
const ENVELOPE_MARGIN: f64 = 1.25;

/// Exact sampler of single-mode quadrature densities `|sum_a c_a psi_a(x)|^2`
/// for unit vectors `c` on `levels` Fock levels.
///
/// By Cauchy-Schwarz every such density is bounded by `g(x) = sum_a
/// psi_a(x)^2`, which integrates to `levels`. Proposals come from a
/// piecewise-constant bound on `g`, so the acceptance rate is about
/// `1 / (margin * levels)`. Mass beyond the table range (four units past
/// the outermost turning point) is below `1e-13` and is dropped.
#[derive(Debug, Clone)]
pub struct FockQuadratureSampler {
    levels: usize,
    x_min: f64,
    width: f64,
    bounds: Vec<f64>,
    cells: WeightedIndex<f64>,
}

impl FockQuadratureSampler {
    pub fn new(levels: usize) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidArgument("Fock sampler needs at least one level".into()));
        }
        let reach = ((2.0 * levels as f64 - 1.0) / 2.0).sqrt() + 4.0;
        let x_min = -reach;
        let width = 2.0 * reach / ENVELOPE_CELLS as f64;
        let mut psi = vec![0.0; levels];
        let envelope = |x: f64, psi: &mut [f64]| {
            fock_wavefunctions(levels, x, psi);
            psi.iter().map(|v| v * v).sum::<f64>()
        };
        let bounds: Vec<f64> = (0..ENVELOPE_CELLS)
            .map(|c| {
                let left = x_min + c as f64 * width;
                (0..=ENVELOPE_PROBES)
                    .map(|p| envelope(left + width * p as f64 / ENVELOPE_PROBES as f64, &mut psi))
                    .fold(0.0, f64::max)
                    * ENVELOPE_MARGIN
            })
            .collect();
        let cells = WeightedIndex::new(&bounds).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Self {
            levels,
            x_min,
            width,
            bounds,
            cells,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Draws from `|sum_a c_a psi_a(x)|^2 / |c|^2`.
    pub fn sample<R: Rng + ?Sized>(&self, c: &[Complex64], rng: &mut R) -> f64 {
        debug_assert!(c.len() <= self.levels);
        let norm: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        let mut psi = vec![0.0; c.len()];
        loop {
            let cell = self.cells.sample(rng);
            let x = self.x_min + (cell as f64 + rng.random::<f64>()) * self.width;
            fock_wavefunctions(c.len(), x, &mut psi);
            let amp: Complex64 = c.iter().zip(&psi).map(|(a, p)| a * *p).sum();
            let density = amp.norm_sqr() / norm;
            debug_assert!(density <= self.bounds[cell] * (1.0 + 1e-9));
            if rng.random::<f64>() * self.bounds[cell] < density {
                return x;
            }
        }
    }
}

/// Joint homodyne sampler for a pure two-mode state `sum_ab phi_ab |a,b>`.
#[derive(Debug, Clone)]
pub struct FockSampler {
    phi: ComplexMatrix,
    column_weights: WeightedIndex<f64>,
    single: FockQuadratureSampler,
}

impl FockSampler {
    /// `phi` is normalized here; it must be square and nonzero.
    pub fn new(phi: &ComplexMatrix) -> Result<Self> {
        if !phi.is_square() {
            return Err(Error::NotSquare {
                rows: phi.nrows(),
                cols: phi.ncols(),
            });
        }
        let norm = hs_norm(phi);
        if !(norm > 0.0) {
            return Err(Error::ZeroMatrix);
        }
        let phi = phi.unscale(norm);
        let weights: Vec<f64> = (0..phi.ncols()).map(|b| phi.column(b).norm_squared()).collect();
        let column_weights = WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let single = FockQuadratureSampler::new(phi.nrows())?;
        Ok(Self {
            phi,
            column_weights,
            single,
        })
    }

    /// Noise-free `(x1, x2)` at fixed phases.
    pub fn sample_at<R: Rng + ?Sized>(&self, phi1: f64, phi2: f64, rng: &mut R) -> (f64, f64) {
        let d = self.phi.nrows();
        let rot1: Vec<Complex64> = (0..d).map(|a| Complex64::from_polar(1.0, -(a as f64) * phi1)).collect();
        // Mode 1 marginal: mixture over the mode-2 basis.
        let b = self.column_weights.sample(rng);
        let chi: Vec<Complex64> = (0..d).map(|a| self.phi[(a, b)] * rot1[a]).collect();
        let x1 = self.single.sample(&chi, rng);
        // Mode 2 conditioned on x1.
        let mut psi = vec![0.0; d];
        fock_wavefunctions(d, x1, &mut psi);
        let cond: Vec<Complex64> = (0..d)
            .map(|b| {
                let amp: Complex64 = (0..d).map(|a| self.phi[(a, b)] * rot1[a] * psi[a]).sum();
                amp * Complex64::from_polar(1.0, -(b as f64) * phi2)
            })
            .collect();
        let x2 = self.single.sample(&cond, rng);
        (x1, x2)
    }
}

/// Heralded outputs of an operation applied to mode 1 of `|psi>>`: each Kraus
/// branch with its probability and normalized output.
#[derive(Debug, Clone)]
pub struct HeraldModel {
    probabilities: Vec<f64>,
    outputs: Vec<ComplexMatrix>,
}

impl HeraldModel {
    pub fn new(op: &QuantumOperation, psi: &ComplexMatrix) -> Result<Self> {
        if op.dim() != psi.nrows() || !psi.is_square() {
            return Err(Error::ShapeMismatch {
                expected: crate::error::shape(op.dim(), op.dim()),
                got: crate::error::shape(psi.nrows(), psi.ncols()),
            });
        }
        let mut probabilities = Vec::new();
        let mut outputs = Vec::new();
        for k in op.kraus_operators() {
            let out = k * psi;
            let n = hs_norm(&out);
            if n * n > 1e-300 {
                probabilities.push(n * n);
                outputs.push(out.unscale(n));
            }
        }
        if probabilities.is_empty() {
            return Err(Error::AnnihilatingOperation(0.0));
        }
        Ok(Self {
            probabilities,
            outputs,
        })
    }

    /// `p = sum_n |K_n psi|^2`.
    pub fn occurrence_probability(&self) -> f64 {
        self.probabilities.iter().sum::<f64>().min(1.0)
    }

    pub fn branches(&self) -> impl Iterator<Item = (f64, &ComplexMatrix)> {
        self.probabilities.iter().copied().zip(&self.outputs)
    }

    /// Bipartite output `sum_n p_n |phi_n>><<phi_n| / p` (unit trace).
    pub fn output_state(&self) -> ComplexMatrix {
        let d = self.outputs[0].nrows();
        let p = self.occurrence_probability();
        let mut r = ComplexMatrix::zeros(d * d, d * d);
        for (w, out) in self.branches() {
            r += outer(&vec(out).expect("outputs are square")).scale(w / p);
        }
        r
    }

    /// `Some(branch)` when the operation occurs.
    pub fn herald<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        let mut u = rng.random::<f64>();
        for (n, p) in self.probabilities.iter().enumerate() {
            if u < *p {
                return Some(n);
            }
            u -= p;
        }
        None
    }
}

/// Homodyne sampler for the heralded output of a general operation.
#[derive(Debug, Clone)]
pub struct OperationSampler {
    model: HeraldModel,
    branches: Vec<FockSampler>,
    eta: f64,
}

impl OperationSampler {
    pub fn new(model: HeraldModel, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        let branches = model.outputs.iter().map(FockSampler::new).collect::<Result<_>>()?;
        Ok(Self { model, branches, eta })
    }

    pub fn model(&self) -> &HeraldModel {
        &self.model
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> QuadratureSample {
        let phi1 = random_phase(rng);
        let phi2 = random_phase(rng);
        self.sample_at(phi1, phi2, rng)
    }

    pub fn sample_at<R: Rng + ?Sized>(&self, phi1: f64, phi2: f64, rng: &mut R) -> QuadratureSample {
        let Some(branch) = self.model.herald(rng) else {
            return QuadratureSample::unheralded(phi1, phi2);
        };
        let (x1, x2) = self.branches[branch].sample_at(phi1, phi2, rng);
        let s = efficiency_noise_variance(self.eta).sqrt();
        QuadratureSample {
            phi1,
            phi2,
            x1: x1 + s * normal(rng),
            x2: x2 + s * normal(rng),
            herald: true,
        }
    }
}

/// `n` records for the operation's output on the truncated entangler.
pub fn sample_fock_general<R: Rng + ?Sized>(sampler: &OperationSampler, n: usize, rng: &mut R) -> Vec<QuadratureSample> {
    (0..n).map(|_| sampler.sample(rng)).collect()
}

/// One joint outcome of a finite two-mode quorum measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FiniteOutcome {
    pub obs1: usize,
    pub obs2: usize,
    pub outcome1: usize,
    pub outcome2: usize,
}

/// Every joint outcome with its probability (quorum weights included) for
/// the state `r_out / Tr r_out`.
pub fn finite_outcome_table(r_out: &ComplexMatrix, q: &FiniteQuorum) -> Result<Vec<(FiniteOutcome, f64)>> {
    let d = q.dim();
    if r_out.nrows() != d * d || !r_out.is_square() {
        return Err(Error::ShapeMismatch {
            expected: crate::error::shape(d * d, d * d),
            got: crate::error::shape(r_out.nrows(), r_out.ncols()),
        });
    }
    let tr = r_out.trace().re;
    let (values, _) = hermitian_eigen(r_out);
    let smallest = values.first().copied().unwrap_or(0.0);
    if !(tr > 0.0) || smallest < -1e-10 * tr.max(1.0) {
        return Err(Error::NumericalPsd(smallest.min(tr)));
    }
    let rho = r_out.unscale(tr);
    let mut table = Vec::new();
    for (k, ok) in q.observables().iter().enumerate() {
        for (l, ol) in q.observables().iter().enumerate() {
            let w = q.weights()[k] * q.weights()[l];
            for (s, ps) in ok.projectors.iter().enumerate() {
                for (t, pt) in ol.projectors.iter().enumerate() {
                    let p = (&rho * kron(ps, pt)).trace().re;
                    if p < -1e-10 {
                        return Err(Error::NumericalPsd(p));
                    }
                    table.push((
                        FiniteOutcome {
                            obs1: k,
                            obs2: l,
                            outcome1: s,
                            outcome2: t,
                        },
                        w * p.max(0.0),
                    ));
                }
            }
        }
    }
    Ok(table)
}

/// Draws observable pairs by quorum weight and outcomes by the Born rule.
#[derive(Debug, Clone)]
pub struct FiniteSampler {
    outcomes: Vec<FiniteOutcome>,
    index: WeightedIndex<f64>,
}

impl FiniteSampler {
    pub fn new(r_out: &ComplexMatrix, q: &FiniteQuorum) -> Result<Self> {
        let table = finite_outcome_table(r_out, q)?;
        let index = WeightedIndex::new(table.iter().map(|(_, p)| *p)).map_err(|_| Error::NumericalPsd(0.0))?;
        Ok(Self {
            outcomes: table.into_iter().map(|(o, _)| o).collect(),
            index,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FiniteOutcome {
        self.outcomes[self.index.sample(rng)]
    }
}

pub fn sample_finite<R: Rng + ?Sized>(r_out: &ComplexMatrix, q: &FiniteQuorum, n: usize, rng: &mut R) -> Result<Vec<FiniteOutcome>> {
    let sampler = FiniteSampler::new(r_out, q)?;
    Ok((0..n).map(|_| sampler.sample(rng)).collect())
}

/// `v` in scientific notation with `digits` significant digits.
pub fn format_significant(v: f64, digits: usize) -> String {
    format!("{:.*e}", digits.saturating_sub(1), v)
}

pub const DUMP_HEADER: &str = "block_id,phi1,phi2,x1,x2,herald";

/// Appends one block of records in the dump format (no header).
pub fn write_dump<W: Write>(out: &mut W, block_id: usize, samples: &[QuadratureSample]) -> io::Result<()> {
    for s in samples {
        writeln!(
            out,
            "{block_id},{},{},{},{},{}",
            format_significant(s.phi1, 9),
            format_significant(s.phi2, 9),
            format_significant(s.x1, 9),
            format_significant(s.x2, 9),
            u8::from(s.herald)
        )?;
    }
    Ok(())
}
