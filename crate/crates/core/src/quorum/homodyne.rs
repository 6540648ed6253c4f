//! Homodyne pattern functions with quantum-efficiency deconvolution.
//!
//! Quadratures are `X_phi = (a^dag e^{i phi} + a e^{-i phi}) / 2` (vacuum
//! variance 1/4). With detector efficiency `eta` the recorded value is the
//! true quadrature plus independent Gaussian noise of variance
//! `(1 - eta) / (4 eta)`.
//!
//! For every operator `O`,
//!
//! ```text
//! O = int_0^pi dphi/pi int dk |k|/4 Tr[O e^{-ik X_phi}] e^{ik X_phi},
//! ```
//!
//! and dividing the measured characteristic function by the noise factor
//! `e^{-s^2 k^2 / 2}` gives an estimator that is unbiased for every state.
//! For `O = |m><n|` it factorizes as `e^{i(n-m) phi} f_nm(x)` with the real,
//! symmetric pattern function (`n >= m`, `d = n - m`)
//!
//! ```text
//! f_nm(x) = 2^{-d-1} sqrt(m!/n!) int_0^inf dk k^{d+1} e^{-c k^2}
//!           L_m^(d)(k^2/4) cos(kx - d pi/2),     c = (2 eta - 1) / (8 eta).
//! ```
//!
//! The integral converges only for `eta > 1/2`. It is evaluated by
//! composite Gauss-Legendre quadrature and tabulated on an `x` grid; values
//! between grid points use four-point Lagrange interpolation and values off
//! the grid fall back to direct quadrature.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::special::{composite_gauss_legendre, fock_wavefunctions, laguerre_all, ln_factorial};

const PANEL_ORDER: usize = 16;
/// Integrand magnitude (relative to its peak) below which the k-range ends.
const K_TAIL: f64 = 1e-18;
const CHUNK: usize = 256;

/// Uniform grid `x_min, x_min + spacing, ..., <= x_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub spacing: f64,
}

impl GridSpec {
    /// `x in [-6(1 + nbar), 6(1 + nbar)]`, spacing 0.01.
    pub fn for_nbar(nbar: f64) -> Self {
        let half = 6.0 * (1.0 + nbar);
        Self {
            x_min: -half,
            x_max: half,
            spacing: 0.01,
        }
    }

    pub fn points(&self) -> usize {
        ((self.x_max - self.x_min) / self.spacing + 1e-9).floor() as usize + 1
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.spacing
    }

    fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0 && self.x_max > self.x_min && self.points() >= 8) {
            return Err(Error::InvalidArgument(format!("bad kernel grid {self:?}")));
        }
        Ok(())
    }
}

/// Noise variance added to each quadrature by efficiency `eta`.
pub fn efficiency_noise_variance(eta: f64) -> f64 {
    (1.0 - eta) / (4.0 * eta)
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.5 && eta <= 1.0 {
        Ok(())
    } else {
        Err(Error::UnphysicalDeconvolution(eta))
    }
}

pub(crate) fn pair_index(n: usize, m: usize) -> usize {
    let (lo, hi) = if n <= m { (n, m) } else { (m, n) };
    hi * (hi + 1) / 2 + lo
}

/// k-space integrand of every pair, without the oscillating factor.
#[derive(Debug, Clone)]
struct KSpace {
    levels: usize,
    c: f64,
}

impl KSpace {
    /// Values for all pairs `lo <= hi < levels` at wavenumber `k`, in
    /// `pair_index` order.
    fn integrand(&self, k: f64, out: &mut [f64]) {
        let u = k * k / 4.0;
        let gauss = -self.c * k * k;
        let ln_k = k.ln();
        for d in 0..self.levels {
            let lag = laguerre_all(self.levels - 1 - d, d as f64, u);
            for (m, l) in lag.iter().enumerate() {
                let n = m + d;
                let ln_mag = 0.5 * (ln_factorial(m) - ln_factorial(n)) - (d as f64 + 1.0) * std::f64::consts::LN_2
                    + (d as f64 + 1.0) * ln_k
                    + gauss;
                out[pair_index(n, m)] = if k > 0.0 { ln_mag.exp() * l } else { 0.0 };
            }
        }
    }

    fn pair_count(&self) -> usize {
        self.levels * (self.levels + 1) / 2
    }

    /// Smallest `k` beyond which every integrand stays below `K_TAIL` of the
    /// largest value seen.
    fn k_max(&self) -> f64 {
        let mut buf = vec![0.0; self.pair_count()];
        let step = 0.05;
        let limit = (900.0 / self.c).sqrt();
        let mut peak: f64 = 0.0;
        let mut last_significant = step;
        let mut k = step;
        while k < limit {
            self.integrand(k, &mut buf);
            let m = buf.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            peak = peak.max(m);
            if m > K_TAIL * peak {
                last_significant = k;
            }
            k += step;
        }
        last_significant + 1.0
    }
}

/// Quadrature rule resolving `cos(kx)` for `|x| <= x_abs`.
fn k_rule(k_max: f64, x_abs: f64) -> (Vec<f64>, Vec<f64>) {
    let width = 0.5f64.min(PI / x_abs.max(1.0));
    let panels = (k_max / width).ceil() as usize;
    composite_gauss_legendre(0.0, k_max, panels, PANEL_ORDER)
}

/// Pattern-function tables for all `n, m < levels` at one efficiency.
#[derive(Debug, Clone)]
pub struct HomodyneKernel {
    levels: usize,
    eta: f64,
    grid: GridSpec,
    /// `tables[pair_index(n, m)][i] = f_nm(grid.x(i))`.
    tables: Vec<Vec<f64>>,
    kspace: KSpace,
    k_max: f64,
}

/// Position of a quadrature value relative to the grid.
#[derive(Debug, Clone, Copy)]
pub enum Location {
    Grid { base: usize, weights: [f64; 4] },
    Off(f64),
}

impl HomodyneKernel {
    /// Tabulates `f_nm` for all `n, m < levels`.
    pub fn build(levels: usize, eta: f64, grid: GridSpec) -> Result<Self> {
        check_eta(eta)?;
        grid.validate()?;
        if levels == 0 || levels > 64 {
            return Err(Error::InvalidArgument(format!("kernel levels {levels} outside 1..=64")));
        }
        let kspace = KSpace {
            levels,
            c: (2.0 * eta - 1.0) / (8.0 * eta),
        };
        let k_max = kspace.k_max();
        let x_abs = grid.x_min.abs().max(grid.x_max.abs());
        let (nodes, weights) = k_rule(k_max, x_abs);
        let pairs = kspace.pair_count();

        // Weighted integrand, split by parity of the offset: even offsets
        // pair with cos(kx), odd with sin(kx); the sign is (-1)^{floor(d/2)}.
        let mut buf = vec![0.0; pairs];
        let mut cos_coeffs = DMatrix::<f64>::zeros(pairs, nodes.len());
        let mut sin_coeffs = DMatrix::<f64>::zeros(pairs, nodes.len());
        for (j, (&k, &w)) in nodes.iter().zip(&weights).enumerate() {
            kspace.integrand(k, &mut buf);
            for hi in 0..levels {
                for lo in 0..=hi {
                    let d = hi - lo;
                    let p = pair_index(hi, lo);
                    let sign = if (d / 2) % 2 == 0 { 1.0 } else { -1.0 };
                    let v = sign * w * buf[p];
                    if !v.is_finite() {
                        return Err(Error::IllConditionedKernel {
                            offset: d,
                            reason: format!("non-finite integrand at k = {k}"),
                        });
                    }
                    if d % 2 == 0 {
                        cos_coeffs[(p, j)] = v;
                    } else {
                        sin_coeffs[(p, j)] = v;
                    }
                }
            }
        }

        let points = grid.points();
        let mut tables = vec![vec![0.0; points]; pairs];
        let mut start = 0;
        while start < points {
            let len = CHUNK.min(points - start);
            let mut cos_block = DMatrix::<f64>::zeros(nodes.len(), len);
            let mut sin_block = DMatrix::<f64>::zeros(nodes.len(), len);
            for (j, &k) in nodes.iter().enumerate() {
                let x0 = grid.x(start);
                let mut rot = Complex64::from_polar(1.0, k * x0);
                let step = Complex64::from_polar(1.0, k * grid.spacing);
                for c in 0..len {
                    cos_block[(j, c)] = rot.re;
                    sin_block[(j, c)] = rot.im;
                    rot *= step;
                }
            }
            let values = &cos_coeffs * &cos_block + &sin_coeffs * &sin_block;
            for (p, table) in tables.iter_mut().enumerate() {
                for c in 0..len {
                    table[start + c] = values[(p, c)];
                }
            }
            start += len;
        }
        for (p, table) in tables.iter().enumerate() {
            if table.iter().any(|v| !v.is_finite()) {
                let hi = ((((8 * p + 1) as f64).sqrt() - 1.0) / 2.0).floor() as usize;
                let lo = p - hi * (hi + 1) / 2;
                return Err(Error::IllConditionedKernel {
                    offset: hi - lo,
                    reason: "non-finite tabulated value".into(),
                });
            }
        }
        Ok(Self {
            levels,
            eta,
            grid,
            tables,
            kspace,
            k_max,
        })
    }

    pub(crate) fn from_parts(levels: usize, eta: f64, grid: GridSpec, tables: Vec<Vec<f64>>) -> Result<Self> {
        check_eta(eta)?;
        let kspace = KSpace {
            levels,
            c: (2.0 * eta - 1.0) / (8.0 * eta),
        };
        let k_max = kspace.k_max();
        Ok(Self {
            levels,
            eta,
            grid,
            tables,
            kspace,
            k_max,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub(crate) fn tables(&self) -> &[Vec<f64>] {
        &self.tables
    }

    /// Largest wavenumber kept by the quadrature.
    pub fn k_max(&self) -> f64 {
        self.k_max
    }

    /// Four-point stencil around `x`, shifted inward at the grid edges;
    /// `Off` beyond the grid.
    pub fn locate(&self, x: f64) -> Location {
        let points = self.grid.points();
        let t = (x - self.grid.x_min) / self.grid.spacing;
        if !(t >= 0.0 && t <= (points - 1) as f64) || points < 4 {
            return Location::Off(x);
        }
        let base = (t.floor() as usize).saturating_sub(1).min(points - 4);
        let u = t - base as f64;
        let weights = [
            -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
            u * (u - 2.0) * (u - 3.0) / 2.0,
            -u * (u - 1.0) * (u - 3.0) / 2.0,
            u * (u - 1.0) * (u - 2.0) / 6.0,
        ];
        Location::Grid { base, weights }
    }

    /// `f_nm` at a located point.
    pub fn pattern_at(&self, loc: &Location, n: usize, m: usize) -> f64 {
        match *loc {
            Location::Grid { base, weights } => {
                let t = &self.tables[pair_index(n, m)][base..base + 4];
                weights[0] * t[0] + weights[1] * t[1] + weights[2] * t[2] + weights[3] * t[3]
            }
            Location::Off(x) => self.pattern_direct(n, m, x),
        }
    }

    pub fn pattern(&self, n: usize, m: usize, x: f64) -> f64 {
        self.pattern_at(&self.locate(x), n, m)
    }

    /// `f_nm(x)` by direct quadrature, bypassing the table.
    pub fn pattern_direct(&self, n: usize, m: usize, x: f64) -> f64 {
        assert!(n < self.levels && m < self.levels, "pattern index outside kernel");
        let (nodes, weights) = k_rule(self.k_max, x.abs());
        let d = n.abs_diff(m);
        let mut buf = vec![0.0; self.kspace.pair_count()];
        let p = pair_index(n, m);
        nodes
            .iter()
            .zip(&weights)
            .map(|(&k, &w)| {
                self.kspace.integrand(k, &mut buf);
                w * buf[p] * (k * x - d as f64 * FRAC_PI_2).cos()
            })
            .sum()
    }

    /// Single-shot estimate of `<|a><b|> = rho_ba` from quadrature `x`
    /// measured at phase `phase`: `e^{i(b-a) phase} f_ba(x)`.
    pub fn dyad(&self, x: f64, phase: f64, a: usize, b: usize) -> Complex64 {
        let f = self.pattern(b, a, x);
        Complex64::from_polar(f, (b as f64 - a as f64) * phase)
    }
}

/// Phase-averaged, efficiency-smeared quadrature distribution of `rho`
/// weighted by `e^{i offset phi}`: `sum_{a - b = offset} rho_ab psi_a psi_b`
/// convolved with the detector noise. Evaluated on `xs` (uniform spacing).
pub fn smeared_component(rho: &ComplexMatrix, offset: isize, eta: f64, xs: &[f64]) -> Vec<Complex64> {
    let d = rho.nrows();
    let mut psi = vec![0.0; d];
    let raw: Vec<Complex64> = xs
        .iter()
        .map(|&x| {
            fock_wavefunctions(d, x, &mut psi);
            let mut acc = Complex64::new(0.0, 0.0);
            for a in 0..d {
                let b = a as isize - offset;
                if b >= 0 && (b as usize) < d {
                    acc += rho[(a, b as usize)] * (psi[a] * psi[b as usize]);
                }
            }
            acc
        })
        .collect();
    let var = efficiency_noise_variance(eta);
    if var == 0.0 {
        return raw;
    }
    let h = xs[1] - xs[0];
    let sigma = var.sqrt();
    let reach = (12.0 * sigma / h).ceil() as usize;
    let gauss: Vec<f64> = (0..=reach)
        .map(|j| {
            let u = j as f64 * h;
            (-u * u / (2.0 * var)).exp() / (2.0 * PI * var).sqrt() * h
        })
        .collect();
    (0..xs.len())
        .map(|i| {
            let mut acc = raw[i] * gauss[0];
            for (j, g) in gauss.iter().enumerate().skip(1) {
                if i >= j {
                    acc += raw[i - j] * *g;
                }
                if i + j < xs.len() {
                    acc += raw[i + j] * *g;
                }
            }
            acc
        })
        .collect()
}

/// Largest deviation between the kernel's estimates (integrated against
/// the exact smeared distributions) and `rho_nm` for `n, m <= max_index`.
/// `rho` should be supported well below its own dimension.
pub fn calibration_residual(kernel: &HomodyneKernel, rho: &ComplexMatrix, max_index: usize) -> Result<f64> {
    if max_index >= kernel.levels() {
        return Err(Error::IndexOutOfWindow {
            index: max_index,
            size: kernel.levels(),
        });
    }
    let grid = kernel.grid();
    let xs: Vec<f64> = (0..grid.points()).map(|i| grid.x(i)).collect();
    let mut worst: f64 = 0.0;
    for offset in -(max_index as isize)..=(max_index as isize) {
        let dist = smeared_component(rho, offset, kernel.eta(), &xs);
        for n in 0..=max_index {
            let m = n as isize - offset;
            if m < 0 || m as usize > max_index {
                continue;
            }
            let table = &kernel.tables()[pair_index(n, m as usize)];
            let est: Complex64 = dist
                .iter()
                .zip(table)
                .map(|(p, f)| p * (*f * grid.spacing))
                .sum();
            worst = worst.max((est - rho[(n, m as usize)]).norm());
        }
    }
    Ok(worst)
}

/// Calibration states: vacuum, coherent `|alpha>` and thermal `nbar`, as
/// density matrices on `levels` Fock levels.
pub fn vacuum_state(levels: usize) -> ComplexMatrix {
    let mut rho = ComplexMatrix::zeros(levels, levels);
    rho[(0, 0)] = Complex64::new(1.0, 0.0);
    rho
}

pub fn coherent_state(alpha: Complex64, levels: usize) -> ComplexMatrix {
    let amps: Vec<Complex64> = (0..levels)
        .map(|n| {
            let ln_norm = -0.5 * alpha.norm_sqr() - 0.5 * ln_factorial(n);
            alpha.powu(n as u32) * ln_norm.exp()
        })
        .collect();
    ComplexMatrix::from_fn(levels, levels, |n, m| amps[n] * amps[m].conj())
}

pub fn thermal_state(nbar: f64, levels: usize) -> ComplexMatrix {
    let q = nbar / (nbar + 1.0);
    let mut rho = ComplexMatrix::zeros(levels, levels);
    for n in 0..levels {
        rho[(n, n)] = Complex64::new((1.0 - q) * q.powi(n as i32), 0.0);
    }
    rho
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(half: f64) -> GridSpec {
        GridSpec {
            x_min: -half,
            x_max: half,
            spacing: 0.01,
        }
    }

    #[test]
    fn rejects_unphysical_efficiency() {
        assert!(matches!(
            HomodyneKernel::build(4, 0.5, grid(6.0)),
            Err(Error::UnphysicalDeconvolution(_))
        ));
        assert!(matches!(
            HomodyneKernel::build(4, 1.1, grid(6.0)),
            Err(Error::UnphysicalDeconvolution(_))
        ));
    }

    #[test]
    fn vacuum_at_unit_efficiency_by_quadrature() {
        // Oracle: Riemann sum of f_00 against the vacuum density.
        let k = HomodyneKernel::build(2, 1.0, grid(8.0)).unwrap();
        let h = 0.001;
        let mut total = 0.0;
        let mut x = -8.0;
        while x <= 8.0 {
            total += k.pattern(0, 0, x) * (2.0 / PI).sqrt() * (-2.0 * x * x).exp() * h;
            x += h;
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn coherent_off_diagonal_at_eta_09() {
        let kernel = HomodyneKernel::build(4, 0.9, grid(12.0)).unwrap();
        let rho = coherent_state(Complex64::new(1.0, 0.0), 40);
        let xs: Vec<f64> = (0..kernel.grid().points()).map(|i| kernel.grid().x(i)).collect();
        // <0|rho|1> uses offset 0 - 1 = -1.
        let dist = smeared_component(&rho, -1, 0.9, &xs);
        let est: Complex64 = dist
            .iter()
            .zip(&kernel.tables()[pair_index(0, 1)])
            .map(|(p, f)| p * (*f * 0.01))
            .sum();
        assert!((est.re - (-1.0f64).exp()).abs() < 1e-3 && est.im.abs() < 1e-9);
    }

    #[test]
    fn thermal_diagonal_at_eta_08() {
        let kernel = HomodyneKernel::build(9, 0.8, grid(12.0)).unwrap();
        let rho = thermal_state(1.0, 60);
        assert!(calibration_residual(&kernel, &rho, 8).unwrap() < 1e-3);
    }

    #[test]
    fn interpolation_matches_direct_quadrature() {
        let kernel = HomodyneKernel::build(6, 0.7, grid(10.0)).unwrap();
        for &x in &[-3.217, -0.4441, 0.0031, 1.2345, 2.6911] {
            for (n, m) in [(0, 0), (1, 0), (3, 5), (5, 5)] {
                let a = kernel.pattern(n, m, x);
                let b = kernel.pattern_direct(n, m, x);
                let scale = kernel.tables()[pair_index(n, m)].iter().fold(0.0f64, |s, v| s.max(v.abs()));
                assert!((a - b).abs() < 1e-4 * scale, "{n} {m} {x}: {a} vs {b}");
            }
        }
        // Off-grid fallback.
        let far = kernel.pattern(2, 1, 11.5);
        assert!((far - kernel.pattern_direct(2, 1, 11.5)).abs() < 1e-12);
        assert!(far.is_finite());
        // Edge cells use a stencil shifted inside the grid.
        for &x in &[-10.0, -9.996, 9.9951, 10.0] {
            assert!(matches!(kernel.locate(x), Location::Grid { .. }), "{x}");
            let a = kernel.pattern(3, 2, x);
            let b = kernel.pattern_direct(3, 2, x);
            let scale = kernel.tables()[pair_index(3, 2)].iter().fold(0.0f64, |s, v| s.max(v.abs()));
            assert!((a - b).abs() < 1e-4 * scale, "{x}: {a} vs {b}");
        }
    }

    #[test]
    fn patterns_are_symmetric_and_finite() {
        let kernel = HomodyneKernel::build(8, 0.7, grid(10.0)).unwrap();
        for table in kernel.tables() {
            assert!(table.iter().all(|v| v.is_finite()));
        }
        assert_eq!(kernel.pattern(2, 5, 0.3), kernel.pattern(5, 2, 0.3));
    }

    #[test]
    fn calibration_family_at_dim_cut_16() {
        let kernel = HomodyneKernel::build(16, 0.9, grid(12.0)).unwrap();
        let states = [
            vacuum_state(60),
            coherent_state(Complex64::new(0.5, 0.0), 60),
            coherent_state(Complex64::new(0.0, 1.0), 60),
            thermal_state(0.5, 60),
            thermal_state(1.0, 60),
        ];
        for rho in &states {
            let r = calibration_residual(&kernel, rho, 8).unwrap();
            assert!(r < 1e-3, "residual {r}");
        }
    }

    fn exact_variance(kernel: &HomodyneKernel, rho: &ComplexMatrix, n: usize) -> f64 {
        let grid = kernel.grid();
        let xs: Vec<f64> = (0..grid.points()).map(|i| grid.x(i)).collect();
        let dist = smeared_component(rho, 0, kernel.eta(), &xs);
        let table = &kernel.tables()[pair_index(n, n)];
        let second: f64 = dist.iter().zip(table).map(|(p, f)| p.re * f * f * grid.spacing).sum();
        second - rho[(n, n)].re.powi(2)
    }

    #[test]
    fn lower_efficiency_costs_variance() {
        let rho = thermal_state(1.0, 60);
        let k7 = HomodyneKernel::build(4, 0.7, grid(12.0)).unwrap();
        let k9 = HomodyneKernel::build(4, 0.9, grid(12.0)).unwrap();
        for n in 0..4 {
            assert!(exact_variance(&k7, &rho, n) > exact_variance(&k9, &rho, n));
        }
    }
}
