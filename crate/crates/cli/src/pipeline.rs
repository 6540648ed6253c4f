//! simulate: state, operation and kernel setup, sampling, estimation.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write as _};
use std::path::Path;
use std::time::{Duration, Instant};

use optomo::estimator::{
    estimate_choi, estimate_pure_matrix, phase_fix, pilot_magnitudes, run_blocks, select_reference, EstimationPlan,
    MatrixEstimate, TargetKind, Trial,
};
use optomo::maps::{displacement_element, kraus_to_choi, twin_beam, KrausMap, QuantumOperation};
use optomo::quorum::cache::load_or_build;
use optomo::quorum::{GridSpec, HomodyneKernel};
use optomo::rng::{block_stream, RngStream, PILOT_STREAM};
use optomo::sampler::{
    displaced_twinbeam_gaussian, sample_fock_general, sample_quadratures, write_dump, GaussianState, HeraldModel,
    OperationSampler, QuadratureSample, DUMP_HEADER,
};
use optomo::{Complex64, ComplexMatrix};

use crate::config::{ExperimentConfig, OperationKind, ReferencePolicy};
use crate::error::CliError;
use crate::report::ResultDocument;

/// Everything a run needs before sampling.
pub struct Setup {
    pub config: ExperimentConfig,
    pub psi: ComplexMatrix,
    pub truncation_deficit: f64,
    pub window: usize,
    pub source: Source,
    pub kind: TargetKind,
    pub theory: ComplexMatrix,
    pub warnings: Vec<String>,
}

/// Record generator for the configured operation.
pub enum Source {
    Gaussian(GaussianState),
    Operation(Box<OperationSampler>),
}

impl Source {
    pub fn generate(&self, eta: f64, n: usize, rng: &mut RngStream) -> Vec<QuadratureSample> {
        match self {
            Source::Gaussian(state) => sample_quadratures(state, eta, n, rng).expect("eta validated"),
            Source::Operation(sampler) => sample_fock_general(sampler, n, rng),
        }
    }
}

pub struct RunOutput {
    pub document: ResultDocument,
    pub estimate: MatrixEstimate,
    pub warnings: Vec<String>,
    pub elapsed: Duration,
}

fn crop(m: &ComplexMatrix, w: usize) -> ComplexMatrix {
    m.view((0, 0), (w, w)).into_owned()
}

/// `R(I)` entries with all four indices below `w`, re-indexed `i*w + j`.
fn crop_choi(r: &ComplexMatrix, d: usize, w: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(w * w, w * w, |a, b| r[((a / w) * d + a % w, (b / w) * d + b % w)])
}

/// Validates the configuration and prepares state, operation and theory.
pub fn prepare(config: &ExperimentConfig) -> Result<Setup, CliError> {
    let mut warnings = config.validate()?;
    let eta = config.eta;
    match config.operation {
        OperationKind::Displacement | OperationKind::Identity => {
            let tb = twin_beam(config.nbar, config.dim_cut()).map_err(CliError::numerical("maps"))?;
            let window = config.window();
            let z = config.z();
            let state = displaced_twinbeam_gaussian(z, config.nbar).map_err(CliError::numerical("sampler"))?;
            let theory = ComplexMatrix::from_fn(window, window, |n, m| displacement_element(z, n, m));
            Ok(Setup {
                config: config.clone(),
                psi: tb.psi,
                truncation_deficit: tb.deficit,
                window,
                source: Source::Gaussian(state),
                kind: TargetKind::Pure,
                theory,
                warnings,
            })
        }
        OperationKind::Kraus => {
            let map = config.kraus_map()?;
            let d = map.dim();
            let tb = twin_beam(config.nbar, d).map_err(CliError::numerical("maps"))?;
            let psi = tb.psi.unscale((1.0 - tb.deficit).sqrt());
            let window = config.window().min(d);
            if window < config.window() {
                warnings.push(format!("window reduced to the operation's {d} levels"));
            }
            let (op, kind, theory) = if map.operators().len() == 1 {
                let k = map.operators()[0].clone();
                let theory = crop(&k, window);
                let op = QuantumOperation::Kraus(KrausMap::new(vec![k]).map_err(CliError::numerical("maps"))?);
                (op, TargetKind::Pure, theory)
            } else {
                let theory = crop_choi(kraus_to_choi(&map).matrix(), d, window);
                (QuantumOperation::Kraus(map), TargetKind::Choi, theory)
            };
            let model = HeraldModel::new(&op, &psi).map_err(CliError::numerical("sampler"))?;
            let sampler = OperationSampler::new(model, eta).map_err(CliError::numerical("sampler"))?;
            Ok(Setup {
                config: config.clone(),
                psi,
                truncation_deficit: 0.0,
                window,
                source: Source::Operation(Box::new(sampler)),
                kind,
                theory,
                warnings,
            })
        }
    }
}

fn plan_for(setup: &Setup, i0: usize, j0: usize) -> Result<EstimationPlan, CliError> {
    match setup.kind {
        TargetKind::Pure => EstimationPlan::pure(&setup.psi, setup.window, i0, j0),
        TargetKind::Choi => EstimationPlan::choi(&setup.psi, setup.window),
    }
    .map_err(CliError::numerical("estimator"))
}

fn build_kernel(config: &ExperimentConfig, levels: usize) -> Result<HomodyneKernel, CliError> {
    let grid = GridSpec::for_nbar(config.nbar);
    match &config.kernel_cache {
        Some(dir) => load_or_build(dir, levels, config.eta, grid),
        None => HomodyneKernel::build(levels, config.eta, grid),
    }
    .map_err(CliError::numerical("quorum"))
}

fn trials(samples: Vec<QuadratureSample>) -> Vec<Trial<optomo::estimator::Quadrature>> {
    samples.into_iter().map(Trial::from).collect()
}

/// Samples and estimates on the current rayon pool.
pub fn execute(setup: &Setup) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let config = &setup.config;
    let mut warnings = setup.warnings.clone();
    let probe = plan_for(setup, 0, 0)?;
    let kernel = build_kernel(config, probe.levels_needed())?;
    let (i0, j0) = match (setup.kind, config.reference) {
        (TargetKind::Pure, ReferencePolicy::Auto) => {
            let mut rng = block_stream(config.master_seed, PILOT_STREAM);
            let pilot = trials(setup.source.generate(config.eta, config.pilot_samples, &mut rng));
            let choice = select_reference(Some(&pilot_magnitudes(&kernel, &pilot, setup.window)));
            warnings.extend(choice.warning);
            (choice.i0, choice.j0)
        }
        (TargetKind::Pure, ReferencePolicy::Fixed) => (config.i0, config.j0),
        (TargetKind::Choi, _) => (0, 0),
    };
    let plan = plan_for(setup, i0, j0)?;
    let per_block = config.samples_per_block;
    let blocks = run_blocks(&kernel, &plan, config.blocks, config.master_seed, |_, rng| {
        trials(setup.source.generate(config.eta, per_block, rng))
    })
    .map_err(CliError::numerical("estimator"))?;
    let numerical = CliError::numerical("estimator");
    let mut estimate = match setup.kind {
        TargetKind::Pure => phase_fix(estimate_pure_matrix(&blocks, &plan).map_err(&numerical)?),
        TargetKind::Choi => estimate_choi(&blocks, &plan).map_err(&numerical)?,
    };
    estimate.meta.config_hash = Some(config.hash());
    estimate.meta.truncation_deficit = setup.truncation_deficit;
    let document = ResultDocument::from_estimate(
        &estimate,
        Some(&setup.theory),
        config.hash(),
        config.master_seed,
        per_block,
        setup.window,
    );
    Ok(RunOutput {
        document,
        estimate,
        warnings,
        elapsed: start.elapsed(),
    })
}

/// [`prepare`] and [`execute`] on a pool of `threads` workers (rayon's
/// default when `None`).
pub fn run_simulate(config: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput, CliError> {
    let setup = prepare(config)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads:?} worker threads: {e}")))?;
    pool.install(|| execute(&setup))
}

/// Resolved configuration and exact targets, without sampling.
pub fn dry_run(config: &ExperimentConfig) -> Result<String, CliError> {
    let setup = prepare(config)?;
    let mut s = String::new();
    let _ = writeln!(s, "# resolved configuration (sha256 {})", config.hash());
    s.push_str(&config.to_toml());
    let _ = writeln!(s, "# dim_cut = {}, window = {}", config.dim_cut(), setup.window);
    let _ = writeln!(s, "# truncation deficit = {:.3e}", setup.truncation_deficit);
    for w in &setup.warnings {
        let _ = writeln!(s, "# warning: {w}");
    }
    let label = match setup.kind {
        TargetKind::Pure => "operation matrix",
        TargetKind::Choi => "Choi matrix R(I)",
    };
    let _ = writeln!(s, "# theory: {label}, rows n m re im");
    let t = &setup.theory;
    for n in 0..t.nrows() {
        for m in 0..t.ncols() {
            let z: Complex64 = t[(n, m)];
            let _ = writeln!(s, "{n} {m} {:.8e} {:.8e}", z.re, z.im);
        }
    }
    Ok(s)
}

/// Regenerates every block's records and writes them in the dump format.
pub fn write_sample_dump(setup: &Setup, path: &Path) -> Result<(), CliError> {
    let config = &setup.config;
    let file = File::create(path).map_err(CliError::output(path))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{DUMP_HEADER}").map_err(CliError::output(path))?;
    for b in 0..config.blocks {
        let mut rng = block_stream(config.master_seed, b as u64);
        let samples = setup.source.generate(config.eta, config.samples_per_block, &mut rng);
        write_dump(&mut out, b, &samples).map_err(CliError::output(path))?;
    }
    out.flush().map_err(CliError::output(path))
}

/// Writes the result document, plot files, run log and optional dump.
pub fn write_outputs(config: &ExperimentConfig, run: &RunOutput) -> Result<Vec<std::path::PathBuf>, CliError> {
    let mut written = Vec::new();
    let output = &config.output;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(CliError::output(parent))?;
    }
    let text = run.document.render();
    fs::write(output, &text).map_err(CliError::output(output))?;
    written.push(output.clone());
    // Plot from the document as written so emit-plotdata gives the same bytes.
    written.extend(ResultDocument::parse(&text)?.write_plot_files(&config.plot_prefix())?);
    let log = output.with_extension("log");
    let mut text = format!("wall_clock_seconds {:.3}\n", run.elapsed.as_secs_f64());
    for w in &run.warnings {
        let _ = writeln!(text, "warning {w}");
    }
    fs::write(&log, text).map_err(CliError::output(&log))?;
    written.push(log);
    if let Some(dump) = &config.sample_dump {
        let setup = prepare(config)?;
        write_sample_dump(&setup, dump)?;
        written.push(dump.clone());
    }
    Ok(written)
}
