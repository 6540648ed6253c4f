//! From measurement records to the operation matrix or its Choi matrix.
//!
//! Every estimator here is a product of single-mode dyad estimators: an
//! unbiased single-shot estimate of `<|a><b|>` from one mode's outcome.
//!
//! Pure case, reference `(i0, j0)`, window `W`:
//!
//! ```text
//! A_ij  ~  kappa <|i0><i| (x) |j0><w_j|>,   <w_j| = sum_k (psi^-1)_kj <k|,
//! kappa = sqrt(p / <|i0><i0| (x) |j0><j0|>).
//! ```
//!
//! The recovered matrix equals `A` times the unit phase of
//! `conj(phi_{i0 j0})`; [`phase_fix`] then applies the reporting convention.
//!
//! General case: `<<i,j|R(I)|l,k>> = p <|l><i| (x) |w_k><w_j|>`.
//!
//! Records are processed in blocks, each with its own random stream; error
//! bars come from per-block pseudo-values of the full (nonlinear) estimator.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{inverse, ComplexMatrix, RealMatrix, ZERO};
use crate::quorum::finite::FiniteQuorum;
use crate::quorum::homodyne::{HomodyneKernel, Location};
use crate::rng::{block_stream, RngStream};
use crate::sampler::{FiniteOutcome, QuadratureSample};

/// Relative magnitude within which two candidates count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Standard errors subtracted from pilot estimates in [`pilot_magnitudes`].
pub const PILOT_MARGIN: f64 = 2.0;

/// Unbiased single-shot estimates of single-mode dyads.
pub trait SingleModeEstimator: Sync {
    type Outcome: Copy + Send + Sync;
    type Prepared;

    fn prepare(&self, outcome: &Self::Outcome) -> Self::Prepared;
    /// Estimate of `<|a><b|>`, that is of `rho_ba`.
    fn dyad(&self, prepared: &Self::Prepared, a: usize, b: usize) -> Complex64;
    /// Indices must stay below this.
    fn levels(&self) -> usize;
}

/// Homodyne outcome of one mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub x: f64,
    pub phase: f64,
}

impl SingleModeEstimator for HomodyneKernel {
    type Outcome = Quadrature;
    type Prepared = (Location, f64);

    fn prepare(&self, outcome: &Quadrature) -> (Location, f64) {
        (self.locate(outcome.x), outcome.phase)
    }

    fn dyad(&self, prepared: &(Location, f64), a: usize, b: usize) -> Complex64 {
        let f = self.pattern_at(&prepared.0, b, a);
        Complex64::from_polar(f, (b as f64 - a as f64) * prepared.1)
    }

    fn levels(&self) -> usize {
        HomodyneKernel::levels(self)
    }
}

/// `(observable, eigenvalue index)`.
impl SingleModeEstimator for FiniteQuorum {
    type Outcome = (usize, usize);
    type Prepared = (usize, usize);

    fn prepare(&self, outcome: &(usize, usize)) -> (usize, usize) {
        *outcome
    }

    fn dyad(&self, prepared: &(usize, usize), a: usize, b: usize) -> Complex64 {
        FiniteQuorum::dyad(self, prepared.0, prepared.1, a, b)
    }

    fn levels(&self) -> usize {
        self.dim()
    }
}

/// One trial: whether the operation occurred and, if so, both outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial<O> {
    pub herald: bool,
    pub mode1: O,
    pub mode2: O,
}

impl From<QuadratureSample> for Trial<Quadrature> {
    fn from(s: QuadratureSample) -> Self {
        Self {
            herald: s.herald,
            mode1: Quadrature { x: s.x1, phase: s.phi1 },
            mode2: Quadrature { x: s.x2, phase: s.phi2 },
        }
    }
}

impl From<FiniteOutcome> for Trial<(usize, usize)> {
    fn from(o: FiniteOutcome) -> Self {
        Self {
            herald: true,
            mode1: (o.obs1, o.outcome1),
            mode2: (o.obs2, o.outcome2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Pure,
    Choi,
}

/// Which entries to estimate and the entangler data they need.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationPlan {
    pub kind: TargetKind,
    pub window: usize,
    pub i0: usize,
    pub j0: usize,
    /// Mode-2 indices `k` with a nonzero `(psi^-1)_kj` for some `j < window`.
    pub support: Vec<usize>,
    /// `(psi^-1)_{support[s], j}`.
    pub c2: ComplexMatrix,
}

impl EstimationPlan {
    /// Entries `A_ij` for `i, j < window`.
    pub fn pure(psi: &ComplexMatrix, window: usize, i0: usize, j0: usize) -> Result<Self> {
        for index in [i0, j0] {
            if index >= window {
                return Err(Error::IndexOutOfWindow { index, size: window });
            }
        }
        Self::build(TargetKind::Pure, psi, window, i0, j0)
    }

    /// Entries of `R(I)` with all four indices below `window`.
    pub fn choi(psi: &ComplexMatrix, window: usize) -> Result<Self> {
        Self::build(TargetKind::Choi, psi, window, 0, 0)
    }

    fn build(kind: TargetKind, psi: &ComplexMatrix, window: usize, i0: usize, j0: usize) -> Result<Self> {
        let d = psi.nrows();
        if window == 0 || window > d {
            return Err(Error::IndexOutOfWindow {
                index: window.saturating_sub(1),
                size: d,
            });
        }
        let inv = inverse(psi)?;
        let scale = (0..d)
            .flat_map(|k| (0..window).map(move |j| (k, j)))
            .map(|(k, j)| inv[(k, j)].norm())
            .fold(0.0, f64::max);
        let support: Vec<usize> = (0..d)
            .filter(|&k| (0..window).any(|j| inv[(k, j)].norm() > 1e-14 * scale))
            .collect();
        let c2 = ComplexMatrix::from_fn(support.len(), window, |s, j| inv[(support[s], j)]);
        Ok(Self {
            kind,
            window,
            i0,
            j0,
            support,
            c2,
        })
    }

    /// Single-mode estimators must cover indices below this.
    pub fn levels_needed(&self) -> usize {
        let top = self.support.iter().copied().max().unwrap_or(0);
        top.max(self.window - 1).max(self.i0).max(self.j0) + 1
    }

    pub fn targets(&self) -> usize {
        match self.kind {
            TargetKind::Pure => self.window * self.window,
            TargetKind::Choi => self.window.pow(4),
        }
    }
}

/// Weighted sums over the heralded trials of one or more blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAccumulator {
    pub trials: u64,
    pub heralds: u64,
    /// Total weight of heralded trials (their count when sampling).
    pub weight: f64,
    pub sums: Vec<Complex64>,
    /// Sum of the reference-projector estimates (pure case).
    pub den_sum: f64,
}

impl BlockAccumulator {
    pub fn new(targets: usize) -> Self {
        Self {
            trials: 0,
            heralds: 0,
            weight: 0.0,
            sums: vec![ZERO; targets],
            den_sum: 0.0,
        }
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.sums.len(), other.sums.len(), "accumulators of different plans");
        self.trials += other.trials;
        self.heralds += other.heralds;
        self.weight += other.weight;
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        self.den_sum += other.den_sum;
    }

    /// Merge in slice order.
    pub fn merged(blocks: &[Self]) -> Option<Self> {
        let mut it = blocks.iter();
        let mut total = it.next()?.clone();
        for b in it {
            total.merge(b);
        }
        Some(total)
    }

    pub fn herald_fraction(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.heralds as f64 / self.trials as f64
        }
    }
}

/// Per-trial evaluation with reusable scratch space.
pub struct Evaluator<'a, E: SingleModeEstimator> {
    est: &'a E,
    plan: &'a EstimationPlan,
    u: Vec<Complex64>,
    t: Vec<Complex64>,
    v: Vec<Complex64>,
    x: ComplexMatrix,
    t2: ComplexMatrix,
}

impl<'a, E: SingleModeEstimator> Evaluator<'a, E> {
    pub fn new(est: &'a E, plan: &'a EstimationPlan) -> Result<Self> {
        if plan.levels_needed() > est.levels() {
            return Err(Error::IndexOutOfWindow {
                index: plan.levels_needed() - 1,
                size: est.levels(),
            });
        }
        let (w, s) = (plan.window, plan.support.len());
        Ok(Self {
            est,
            plan,
            u: vec![ZERO; w],
            t: vec![ZERO; s],
            v: vec![ZERO; w],
            x: ComplexMatrix::zeros(w, w),
            t2: ComplexMatrix::zeros(s, s),
        })
    }

    pub fn add(&mut self, acc: &mut BlockAccumulator, trial: &Trial<E::Outcome>, weight: f64) {
        acc.trials += 1;
        if !trial.herald {
            return;
        }
        acc.heralds += 1;
        acc.weight += weight;
        let p1 = self.est.prepare(&trial.mode1);
        let p2 = self.est.prepare(&trial.mode2);
        let plan = self.plan;
        let w = plan.window;
        match plan.kind {
            TargetKind::Pure => {
                for i in 0..w {
                    self.u[i] = self.est.dyad(&p1, plan.i0, i);
                }
                for (s, &k) in plan.support.iter().enumerate() {
                    self.t[s] = self.est.dyad(&p2, plan.j0, k);
                }
                for j in 0..w {
                    self.v[j] = (0..plan.support.len()).map(|s| plan.c2[(s, j)] * self.t[s]).sum();
                }
                let den = self.u[plan.i0] * self.est.dyad(&p2, plan.j0, plan.j0);
                acc.den_sum += weight * den.re;
                for i in 0..w {
                    let ui = self.u[i] * weight;
                    for j in 0..w {
                        acc.sums[i * w + j] += ui * self.v[j];
                    }
                }
            }
            TargetKind::Choi => {
                for l in 0..w {
                    for i in 0..w {
                        self.x[(l, i)] = self.est.dyad(&p1, l, i);
                    }
                }
                for (a, &ka) in plan.support.iter().enumerate() {
                    for (b, &kb) in plan.support.iter().enumerate() {
                        self.t2[(a, b)] = self.est.dyad(&p2, ka, kb);
                    }
                }
                let y = plan.c2.adjoint() * &self.t2 * &plan.c2;
                let w2 = w * w;
                for i in 0..w {
                    for j in 0..w {
                        let row = (i * w + j) * w2;
                        for l in 0..w {
                            let xi = self.x[(l, i)] * weight;
                            for k in 0..w {
                                acc.sums[row + l * w + k] += xi * y[(k, j)];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn accumulate<E: SingleModeEstimator>(est: &E, plan: &EstimationPlan, trials: &[Trial<E::Outcome>]) -> Result<BlockAccumulator> {
    let mut acc = BlockAccumulator::new(plan.targets());
    let mut ev = Evaluator::new(est, plan)?;
    for t in trials {
        ev.add(&mut acc, t, 1.0);
    }
    Ok(acc)
}

/// Exact expectations: every heralded trial weighted by its probability.
pub fn accumulate_exact<E: SingleModeEstimator>(
    est: &E,
    plan: &EstimationPlan,
    table: &[(f64, Trial<E::Outcome>)],
) -> Result<BlockAccumulator> {
    let mut acc = BlockAccumulator::new(plan.targets());
    let mut ev = Evaluator::new(est, plan)?;
    for (w, t) in table {
        ev.add(&mut acc, t, *w);
    }
    Ok(acc)
}

/// Generates and accumulates `blocks` blocks in parallel. Block `b` draws
/// from `block_stream(master_seed, b)`; the result is in block order and
/// does not depend on the number of worker threads.
pub fn run_blocks<E, G>(est: &E, plan: &EstimationPlan, blocks: usize, master_seed: u64, generate: G) -> Result<Vec<BlockAccumulator>>
where
    E: SingleModeEstimator,
    G: Fn(usize, &mut RngStream) -> Vec<Trial<E::Outcome>> + Sync,
{
    Evaluator::new(est, plan)?;
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_stream(master_seed, b as u64);
            let trials = generate(b, &mut rng);
            accumulate(est, plan, &trials)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaEstimate {
    pub p_hat: f64,
    pub p_std_error: f64,
    /// Estimate of `<|i0,j0>><<i0,j0|>`.
    pub denominator: f64,
    pub denominator_std_error: f64,
    /// `sqrt(p_hat / denominator)`, real positive before phase fixing.
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateMeta {
    pub i0: usize,
    pub j0: usize,
    pub config_hash: Option<String>,
    pub truncation_deficit: f64,
    /// Unit phase multiplied into the values by [`phase_fix`] (1 if none).
    pub phase: Complex64,
    /// Choi case: largest `|R - R^dag| / 2` before hermitization.
    pub hermiticity_defect: Option<f64>,
    /// Choi case: the same defect in units of its own standard error.
    pub hermiticity_defect_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEstimate {
    pub kind: TargetKind,
    pub values: ComplexMatrix,
    pub std_errors: RealMatrix,
    /// Overall factor applied to the grand mean, phase included.
    pub kappa: Complex64,
    pub kappa_detail: Option<KappaEstimate>,
    pub p_hat: f64,
    pub p_std_error: f64,
    pub blocks: usize,
    pub meta: EstimateMeta,
}

fn check_blocks(blocks: &[BlockAccumulator]) -> Result<BlockAccumulator> {
    if blocks.len() < 2 {
        return Err(Error::InvalidArgument("error bars need at least two blocks".into()));
    }
    let total = BlockAccumulator::merged(blocks).expect("non-empty");
    if total.heralds == 0 || !(total.weight > 0.0) {
        return Err(Error::EmptyHeraldedSet);
    }
    Ok(total)
}

fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Standard error of the mean of per-block pseudo-values.
fn pseudo_std_error(values: impl Iterator<Item = Complex64> + Clone, count: usize) -> f64 {
    let b = count as f64;
    let mean: Complex64 = values.clone().sum::<Complex64>() / b;
    let var = values.map(|u| (u - mean).norm_sqr()).sum::<f64>() / (b - 1.0);
    (var / b).sqrt()
}

pub fn estimate_kappa(blocks: &[BlockAccumulator]) -> Result<KappaEstimate> {
    let total = check_blocks(blocks)?;
    let p_hat = total.herald_fraction();
    let denominator = total.den_sum / total.weight;
    let den_b = blocks
        .iter()
        .map(|b| Complex64::new(if b.weight > 0.0 { b.den_sum / b.weight } else { denominator }, 0.0));
    let denominator_std_error = pseudo_std_error(den_b, blocks.len());
    if !(denominator > 2.0 * denominator_std_error) {
        return Err(Error::ReferenceTooSmall {
            value: denominator,
            std_error: denominator_std_error,
        });
    }
    Ok(KappaEstimate {
        p_hat,
        p_std_error: binomial_se(p_hat, total.trials),
        denominator,
        denominator_std_error,
        kappa: (p_hat / denominator).sqrt(),
    })
}

/// `A_ij` for `i, j < window` with per-entry standard errors. The values
/// carry the unmeasurable global phase; see [`phase_fix`].
pub fn estimate_pure_matrix(blocks: &[BlockAccumulator], plan: &EstimationPlan) -> Result<MatrixEstimate> {
    if plan.kind != TargetKind::Pure {
        return Err(Error::InvalidArgument("plan does not target the operation matrix".into()));
    }
    let total = check_blocks(blocks)?;
    let kappa = estimate_kappa(blocks)?;
    let w = plan.window;
    let grand: Vec<Complex64> = total.sums.iter().map(|s| s / total.weight).collect();
    let (p, d, k) = (kappa.p_hat, kappa.denominator, kappa.kappa);
    let values = ComplexMatrix::from_fn(w, w, |i, j| grand[i * w + j] * k);
    let mut std_errors = RealMatrix::zeros(w, w);
    for i in 0..w {
        for j in 0..w {
            let t = i * w + j;
            let e = grand[t];
            let pseudo = blocks.iter().map(|b| {
                let (m, db) = if b.weight > 0.0 {
                    (b.sums[t] / b.weight, b.den_sum / b.weight)
                } else {
                    (e, d)
                };
                let pb = b.herald_fraction();
                (m - e * ((db - d) / (2.0 * d)) + e * ((pb - p) / (2.0 * p))) * k
            });
            std_errors[(i, j)] = pseudo_std_error(pseudo, blocks.len());
        }
    }
    Ok(MatrixEstimate {
        kind: TargetKind::Pure,
        values,
        std_errors,
        kappa: Complex64::new(k, 0.0),
        p_hat: p,
        p_std_error: kappa.p_std_error,
        kappa_detail: Some(kappa),
        blocks: blocks.len(),
        meta: EstimateMeta {
            i0: plan.i0,
            j0: plan.j0,
            config_hash: None,
            truncation_deficit: 0.0,
            phase: Complex64::new(1.0, 0.0),
            hermiticity_defect: None,
            hermiticity_defect_sigma: None,
        },
    })
}

fn choi_matrix_from(sums: &[Complex64], w: usize, scale: f64) -> ComplexMatrix {
    let w2 = w * w;
    ComplexMatrix::from_fn(w2, w2, |r, c| sums[r * w2 + c] * scale)
}

/// `R(I)` restricted to the window, hermitized, with per-entry errors.
pub fn estimate_choi(blocks: &[BlockAccumulator], plan: &EstimationPlan) -> Result<MatrixEstimate> {
    if plan.kind != TargetKind::Choi {
        return Err(Error::InvalidArgument("plan does not target the Choi matrix".into()));
    }
    let total = check_blocks(blocks)?;
    let p = total.herald_fraction();
    let w = plan.window;
    let w2 = w * w;
    let grand = choi_matrix_from(&total.sums, w, 1.0 / total.weight);
    let raw = grand.scale(p);
    // Linearized pseudo-values of p * E, one matrix per block.
    let pseudo: Vec<ComplexMatrix> = blocks
        .iter()
        .map(|b| {
            let m = if b.weight > 0.0 {
                choi_matrix_from(&b.sums, w, 1.0 / b.weight)
            } else {
                grand.clone()
            };
            (m - &grand).scale(p) + grand.scale(b.herald_fraction() - p) + &raw
        })
        .collect();
    let herm = |m: &ComplexMatrix| (m + m.adjoint()).scale(0.5);
    let anti = |m: &ComplexMatrix| (m - m.adjoint()).scale(0.5);
    let mut std_errors = RealMatrix::zeros(w2, w2);
    let mut defect: f64 = 0.0;
    let mut defect_sigma: f64 = 0.0;
    let raw_anti = anti(&raw);
    let herm_pseudo: Vec<ComplexMatrix> = pseudo.iter().map(herm).collect();
    let anti_pseudo: Vec<ComplexMatrix> = pseudo.iter().map(anti).collect();
    for r in 0..w2 {
        for c in 0..w2 {
            std_errors[(r, c)] = pseudo_std_error(herm_pseudo.iter().map(|m| m[(r, c)]), blocks.len());
            let a = raw_anti[(r, c)].norm();
            defect = defect.max(a);
            let se = pseudo_std_error(anti_pseudo.iter().map(|m| m[(r, c)]), blocks.len());
            if se > 0.0 {
                defect_sigma = defect_sigma.max(a / se);
            }
        }
    }
    Ok(MatrixEstimate {
        kind: TargetKind::Choi,
        values: herm(&raw),
        std_errors,
        kappa: Complex64::new(p, 0.0),
        kappa_detail: None,
        p_hat: p,
        p_std_error: binomial_se(p, total.trials),
        blocks: blocks.len(),
        meta: EstimateMeta {
            i0: 0,
            j0: 0,
            config_hash: None,
            truncation_deficit: 0.0,
            phase: Complex64::new(1.0, 0.0),
            hermiticity_defect: Some(defect),
            hermiticity_defect_sigma: Some(defect_sigma),
        },
    })
}

/// Exact value of the estimator chain from an exact accumulator and the
/// true occurrence probability `p`.
pub fn exact_estimate(acc: &BlockAccumulator, plan: &EstimationPlan, p: f64) -> Result<ComplexMatrix> {
    if !(acc.weight > 0.0) {
        return Err(Error::EmptyHeraldedSet);
    }
    let w = plan.window;
    match plan.kind {
        TargetKind::Pure => {
            let d = acc.den_sum / acc.weight;
            if !(d > 0.0) {
                return Err(Error::ReferenceTooSmall { value: d, std_error: 0.0 });
            }
            let k = (p / d).sqrt();
            Ok(ComplexMatrix::from_fn(w, w, |i, j| acc.sums[i * w + j] * (k / acc.weight)))
        }
        TargetKind::Choi => Ok(choi_matrix_from(&acc.sums, w, p / acc.weight)),
    }
}

/// Position of the largest-magnitude entry; ties within [`TIE_TOLERANCE`]
/// go to the first in row-major order. `None` for an all-zero matrix.
fn argmax_row_major(magnitude: impl Fn(usize, usize) -> f64, rows: usize, cols: usize) -> Option<(usize, usize)> {
    let max = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| magnitude(r, c))
        .fold(0.0, f64::max);
    if !(max > 0.0) {
        return None;
    }
    (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .find(|&(r, c)| magnitude(r, c) >= max * (1.0 - TIE_TOLERANCE))
}

/// Rotates the values (and kappa) so the largest-magnitude entry is real
/// positive.
pub fn phase_fix(mut estimate: MatrixEstimate) -> MatrixEstimate {
    let v = &estimate.values;
    if let Some((r, c)) = argmax_row_major(|r, c| v[(r, c)].norm(), v.nrows(), v.ncols()) {
        let z = v[(r, c)];
        let phase = z.conj() / z.norm();
        estimate.values = estimate.values.map(|x| x * phase);
        estimate.kappa *= phase;
        estimate.meta.phase *= phase;
    }
    estimate
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceChoice {
    pub i0: usize,
    pub j0: usize,
    pub warning: Option<String>,
}

/// `(i0, j0)` maximizing the (pilot or exact) magnitude `|phi_ij|`; `(0, 0)`
/// without a pilot or when every magnitude vanishes.
pub fn select_reference(magnitudes: Option<&RealMatrix>) -> ReferenceChoice {
    let Some(m) = magnitudes else {
        return ReferenceChoice {
            i0: 0,
            j0: 0,
            warning: None,
        };
    };
    match argmax_row_major(|r, c| m[(r, c)].abs(), m.nrows(), m.ncols()) {
        Some((i0, j0)) => ReferenceChoice { i0, j0, warning: None },
        None => ReferenceChoice {
            i0: 0,
            j0: 0,
            warning: Some("pilot estimate vanishes everywhere; using reference (0, 0)".into()),
        },
    }
}

/// Pilot magnitudes `|phi_ij| = sqrt(<|i><i| (x) |j><j|>)` for `i, j < window`.
/// Each mean is lowered by [`PILOT_MARGIN`] standard errors and clipped at
/// zero, so poorly measured high-index entries do not win the argmax.
pub fn pilot_magnitudes<E: SingleModeEstimator>(est: &E, trials: &[Trial<E::Outcome>], window: usize) -> RealMatrix {
    let mut sums = RealMatrix::zeros(window, window);
    let mut squares = RealMatrix::zeros(window, window);
    let mut count = 0usize;
    let mut d1 = vec![0.0; window];
    for t in trials.iter().filter(|t| t.herald) {
        let p1 = est.prepare(&t.mode1);
        let p2 = est.prepare(&t.mode2);
        for (i, d) in d1.iter_mut().enumerate() {
            *d = est.dyad(&p1, i, i).re;
        }
        for j in 0..window {
            let d2 = est.dyad(&p2, j, j).re;
            for i in 0..window {
                let v = d1[i] * d2;
                sums[(i, j)] += v;
                squares[(i, j)] += v * v;
            }
        }
        count += 1;
    }
    if count < 2 {
        return RealMatrix::zeros(window, window);
    }
    let n = count as f64;
    RealMatrix::from_fn(window, window, |i, j| {
        let mean = sums[(i, j)] / n;
        let var = ((squares[(i, j)] - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean - PILOT_MARGIN * (var / n).sqrt()).max(0.0).sqrt()
    })
}
