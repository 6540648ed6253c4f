use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use optomo_cli::config::ExperimentConfig;
use optomo_cli::error::CliError;
use optomo_cli::pipeline::{dry_run, run_simulate, write_outputs};
use optomo_cli::report::ResultDocument;
use optomo_cli::verify::{run_suite, Suite};

#[derive(Parser)]
#[command(name = "optomo", version, about = "Entanglement-assisted tomography of quantum operations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample, estimate and write the result document and plot files.
    Simulate {
        /// Configuration file, or a bundled preset name (fig2_top, fig2_bottom, fig2_bottom_scaled).
        #[arg(long)]
        config: String,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Print the resolved configuration and exact targets, then stop.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run an oracle suite: unbiasedness, choi, kernels or sampler-moments.
    Verify {
        suite: String,
        /// Detector efficiency for the kernels and sampler-moments suites.
        #[arg(long, default_value_t = 0.9)]
        eta: f64,
    },
    /// Write plot tables from a result document.
    EmitPlotdata {
        #[arg(long)]
        from: PathBuf,
        /// Defaults to the result path without its extension.
        #[arg(long)]
        out_prefix: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, threads, dry_run: dry } => {
            let config = ExperimentConfig::load(&config)?;
            if dry {
                print!("{}", dry_run(&config)?);
                return Ok(());
            }
            let out = run_simulate(&config, threads)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            for path in write_outputs(&config, &out)? {
                println!("wrote {}", path.display());
            }
            eprintln!("wall clock {:.2} s", out.elapsed.as_secs_f64());
            Ok(())
        }
        Command::Verify { suite, eta } => {
            let report = run_suite(suite.parse::<Suite>()?, eta)?;
            println!("{}", report.to_json());
            if report.passed {
                Ok(())
            } else {
                Err(CliError::Verification(format!("suite {suite} has failing checks")))
            }
        }
        Command::EmitPlotdata { from, out_prefix } => {
            let doc = ResultDocument::read(&from)?;
            let prefix = out_prefix.unwrap_or_else(|| from.with_extension(""));
            for path in doc.write_plot_files(&prefix)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
