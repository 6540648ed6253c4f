//! Special functions and quadrature rules used by the kernels and samplers.

/// `L_k^(alpha)(x)` for `k = 0..=n`, by the three-term recurrence.
pub fn laguerre_all(n: usize, alpha: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n == 0 {
        return out;
    }
    out.push(1.0 + alpha - x);
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * out[k] - (kf + alpha) * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    laguerre_all(n, alpha, x)[n]
}

/// Fock-state quadrature wavefunctions `<x|k>` for `k = 0..n_levels`, with
/// `X = (a + a^dag)/2` so that the vacuum density is `sqrt(2/pi) e^{-2x^2}`.
pub fn fock_wavefunctions(n_levels: usize, x: f64, out: &mut [f64]) {
    debug_assert!(out.len() >= n_levels);
    if n_levels == 0 {
        return;
    }
    // Normalized Hermite functions h_k(y) at y = sqrt(2) x, rescaled by 2^{1/4}.
    let y = std::f64::consts::SQRT_2 * x;
    out[0] = (2.0 / std::f64::consts::PI).powf(0.25) * (-x * x).exp();
    if n_levels > 1 {
        out[1] = std::f64::consts::SQRT_2 * y * out[0];
    }
    for k in 1..n_levels.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * y * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
}

pub fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 0 { 0.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule on `[a, b]` split into `panels` equal panels.
pub fn composite_gauss_legendre(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let width = (b - a) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * order);
    let mut weights = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * width;
        for (x, w) in gx.iter().zip(&gw) {
            nodes.push(mid + 0.5 * width * x);
            weights.push(0.5 * width * w);
        }
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laguerre_low_orders() {
        let x = 0.7;
        let l = laguerre_all(3, 0.0, x);
        assert!((l[1] - (1.0 - x)).abs() < 1e-15);
        assert!((l[2] - 0.5 * (x * x - 4.0 * x + 2.0)).abs() < 1e-15);
        assert!((l[3] - (-x.powi(3) + 9.0 * x * x - 18.0 * x + 6.0) / 6.0).abs() < 1e-14);
        // L_1^(a)(x) = 1 + a - x
        assert!((laguerre(1, 2.0, x) - 2.3).abs() < 1e-15);
    }

    #[test]
    fn wavefunctions_orthonormal() {
        let n = 12;
        let mut buf = vec![0.0; n];
        let h = 0.005;
        let mut gram = vec![vec![0.0; n]; n];
        let mut x = -8.0;
        while x <= 8.0 {
            fock_wavefunctions(n, x, &mut buf);
            for a in 0..n {
                for b in 0..n {
                    gram[a][b] += buf[a] * buf[b] * h;
                }
            }
            x += h;
        }
        for a in 0..n {
            for b in 0..n {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a][b] - want).abs() < 1e-9, "{a} {b} {}", gram[a][b]);
            }
        }
    }

    #[test]
    fn fock_one_density_has_variance_three_quarters() {
        let mut buf = vec![0.0; 2];
        let h = 0.001;
        let (mut norm, mut var) = (0.0, 0.0);
        let mut x = -8.0;
        while x <= 8.0 {
            fock_wavefunctions(2, x, &mut buf);
            let expected = 4.0 * x * x * (2.0 / std::f64::consts::PI).sqrt() * (-2.0 * x * x).exp();
            assert!((buf[1] * buf[1] - expected).abs() < 1e-12);
            norm += buf[1] * buf[1] * h;
            var += x * x * buf[1] * buf[1] * h;
            x += h;
        }
        assert!((norm - 1.0).abs() < 1e-9);
        assert!((var - 0.75).abs() < 1e-9);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(22)).sum();
        assert!((integral - 2.0 / 23.0).abs() < 1e-14);
        let (x, w) = composite_gauss_legendre(0.0, 3.0, 7, 10);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * (x * 2.0).cos()).sum();
        assert!((integral - (6.0f64).sin() / 2.0).abs() < 1e-14);
    }
}
