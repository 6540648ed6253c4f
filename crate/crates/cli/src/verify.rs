//! Oracle suites behind `optomo verify`.

use std::str::FromStr;

use optomo::estimator::{accumulate_exact, exact_estimate, EstimationPlan, Trial};
use optomo::linalg::{max_abs_diff, outer, phase_align, vec};
use optomo::maps::{apply_kraus_bipartite, apply_pure, kraus_to_choi, map_from_choi, PureOperation};
use optomo::quorum::finite::{build_finite_quorum, FiniteQuorum};
use optomo::quorum::homodyne::{calibration_residual, coherent_state, thermal_state, vacuum_state};
use optomo::quorum::{GridSpec, HomodyneKernel};
use optomo::random::{random_contraction, random_density, random_entangler, random_kraus_map, seeded};
use optomo::sampler::{displaced_twinbeam_gaussian, finite_outcome_table, sample_quadratures, GaussianState};
use optomo::{Complex64, ComplexMatrix};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Unbiasedness,
    Choi,
    Kernels,
    SamplerMoments,
}

impl FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "unbiasedness" => Ok(Suite::Unbiasedness),
            "choi" => Ok(Suite::Choi),
            "kernels" => Ok(Suite::Kernels),
            "sampler-moments" => Ok(Suite::SamplerMoments),
            other => Err(CliError::Config(format!(
                "unknown suite {other:?}; expected unbiasedness, choi, kernels or sampler-moments"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `value < threshold`.
    fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: value < threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Report {
    fn new(suite: &str, checks: Vec<Check>) -> Self {
        Self {
            suite: suite.into(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn run_suite(suite: Suite, eta: f64) -> Result<Report, CliError> {
    if matches!(suite, Suite::Kernels | Suite::SamplerMoments) && !(eta > 0.5 && eta <= 1.0) {
        return Err(CliError::Config(format!("eta = {eta} is outside (0.5, 1]")));
    }
    match suite {
        Suite::Unbiasedness => unbiasedness(),
        Suite::Choi => choi(),
        Suite::Kernels => kernels(eta),
        Suite::SamplerMoments => sampler_moments(eta),
    }
}

type WeightedTrials = Vec<(f64, Trial<(usize, usize)>)>;

fn exact_table(r_out: &ComplexMatrix, q: &FiniteQuorum) -> Result<WeightedTrials, CliError> {
    Ok(finite_outcome_table(r_out, q)
        .map_err(CliError::numerical("sampler"))?
        .into_iter()
        .map(|(o, p)| (p, Trial::from(o)))
        .collect())
}

/// Expectation of the pure-case chain over all finite-quorum outcomes
/// against random contractions.
fn unbiasedness() -> Result<Report, CliError> {
    let num = CliError::numerical("estimator");
    let mut rng = seeded(101);
    let mut checks = Vec::new();
    for d in 2..=3 {
        let q = build_finite_quorum(d).map_err(&num)?;
        for trial in 0..3 {
            let a = random_contraction(d, 0.8, &mut rng);
            let psi = random_entangler(d, &mut rng);
            let (phi, p) = apply_pure(&PureOperation::new(a.clone()).map_err(&num)?, &psi).map_err(&num)?;
            let r = outer(&vec(&phi).map_err(&num)?).unscale(p);
            let plan = EstimationPlan::pure(&psi, d, 0, 0).map_err(&num)?;
            let acc = accumulate_exact(&q, &plan, &exact_table(&r, &q)?).map_err(&num)?;
            let est = exact_estimate(&acc, &plan, p).map_err(&num)?;
            let (_, dist) = phase_align(&est, &a).map_err(&num)?;
            checks.push(Check::below(format!("pure d={d} #{trial}"), dist, 1e-10));
        }
    }
    Ok(Report::new("unbiasedness", checks))
}

/// Exact Choi-case expectation and the Choi round trip.
fn choi() -> Result<Report, CliError> {
    let num = CliError::numerical("estimator");
    let mut rng = seeded(102);
    let mut checks = Vec::new();
    for d in 2..=3 {
        let q = build_finite_quorum(d).map_err(&num)?;
        let map = random_kraus_map(d, 2, &mut rng);
        let psi = random_entangler(d, &mut rng);
        let r_psi = apply_kraus_bipartite(&map, &psi).map_err(&num)?;
        let p = r_psi.trace().re;
        let plan = EstimationPlan::choi(&psi, d).map_err(&num)?;
        let acc = accumulate_exact(&q, &plan, &exact_table(&r_psi.unscale(p), &q)?).map_err(&num)?;
        let est = exact_estimate(&acc, &plan, p).map_err(&num)?;
        let dist = max_abs_diff(&est, kraus_to_choi(&map).matrix());
        checks.push(Check::below(format!("choi d={d}"), dist, 1e-10));
    }
    let map = random_kraus_map(3, 2, &mut rng);
    let r = kraus_to_choi(&map);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let rho = random_density(3, &mut rng);
        let via_choi = map_from_choi(&r, &rho).map_err(&num)?;
        let direct = map.apply(&rho).map_err(&num)?;
        worst = worst.max(max_abs_diff(&via_choi, &direct));
    }
    checks.push(Check::below("roundtrip d=3 x20", worst, 1e-12));
    Ok(Report::new("choi", checks))
}

/// Kernel calibration family at `dim_cut = 16`, indices up to 8.
fn kernels(eta: f64) -> Result<Report, CliError> {
    let kernel = HomodyneKernel::build(16, eta, GridSpec::for_nbar(1.0)).map_err(CliError::numerical("quorum"))?;
    let states = [
        ("vacuum", vacuum_state(60)),
        ("coherent alpha=1", coherent_state(Complex64::new(1.0, 0.0), 60)),
        ("thermal nbar=1", thermal_state(1.0, 60)),
    ];
    let mut checks = Vec::new();
    for (name, rho) in &states {
        let r = calibration_residual(&kernel, rho, 8).map_err(CliError::numerical("quorum"))?;
        checks.push(Check::below(format!("{name} eta={eta}"), r, 1e-3));
    }
    Ok(Report::new("kernels", checks))
}

/// `|sample variance - expected|` in units of its standard error.
fn variance_z(state: &GaussianState, eta: f64, expected: f64, n: usize, seed: u64) -> Result<f64, CliError> {
    let mut rng = seeded(seed);
    let xs: Vec<f64> = sample_quadratures(state, eta, n, &mut rng)
        .map_err(CliError::numerical("sampler"))?
        .iter()
        .map(|s| s.x1)
        .collect();
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let se = expected * (2.0 / (nf - 1.0)).sqrt();
    Ok((var - expected).abs() / se)
}

/// Quadrature variances of the vacuum and of one twin-beam mode.
fn sampler_moments(eta: f64) -> Result<Report, CliError> {
    let noise = (1.0 - eta) / (4.0 * eta);
    let vacuum = GaussianState::vacuum();
    let nbar = 5.0;
    let beam = displaced_twinbeam_gaussian(Complex64::new(0.0, 0.0), nbar).map_err(CliError::numerical("sampler"))?;
    let checks = vec![
        Check::below(
            format!("vacuum variance 1/(4 eta), eta={eta} (sigma)"),
            variance_z(&vacuum, eta, 0.25 + noise, 1_000_000, 201)?,
            4.0,
        ),
        Check::below(
            format!("twin-beam mode variance (2 nbar + 1)/4, nbar={nbar}, eta={eta} (sigma)"),
            variance_z(&beam, eta, (2.0 * nbar + 1.0) / 4.0 + noise, 1_000_000, 202)?,
            4.0,
        ),
    ];
    Ok(Report::new("sampler-moments", checks))
}
