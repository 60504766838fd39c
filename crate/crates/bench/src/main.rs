use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use l2s_bench::diag::{run_diagnostics, write_report, DiagOptions};
use l2s_bench::experiment::{run_experiment, RunOptions};
use l2s_bench::plot::{emit_plot, Metric, PlotStyle};
use l2s_bench::spec::ExperimentSpec;
use l2s_bench::study::{run_study, StudySpec};
use l2s_bench::{BenchError, Result};

#[derive(Parser)]
#[command(name = "l2s-bench", version, about = "Run optimizer grids, plot traces and check diagnostics")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run with this single seed instead of the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (file for `plot`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with code 3 if any run diverged.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML file.
    Run { config: PathBuf },
    /// Plot trace CSVs (files or directories) as an SVG.
    Plot {
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Metric::GradNorm)]
        metric: Metric,
        #[arg(long, default_value = "")]
        title: String,
    },
    /// Run the diagnostics suite on a small seeded instance.
    Diag {
        #[arg(long, default_value_t = 20)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, default_value_t = 2000)]
        resamples: usize,
    },
    /// Compare n-independent and n-dependent step sizes on growing subsets.
    SubsampleStudy { config: PathBuf },
}

fn spec_dir(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn execute(cli: Cli) -> Result<()> {
    let Common {
        seed,
        workers,
        out,
        strict,
    } = cli.common;
    match cli.command {
        Command::Run { config } => {
            let spec = ExperimentSpec::load(&config)?;
            let options = RunOptions {
                seeds: seed.map(|s| vec![s]),
                workers,
                out_dir: out,
            };
            let report = run_experiment(&spec, &spec_dir(&config), &options)?;
            print!("{}", report.render());
            if strict && report.diverged > 0 {
                return Err(BenchError::Diverged(report.diverged));
            }
        }
        Command::Plot { inputs, metric, title } => {
            let out = out.unwrap_or_else(|| PathBuf::from("plot.svg"));
            let style = PlotStyle {
                title,
                metric,
                ..PlotStyle::default()
            };
            emit_plot(&inputs, &out, &style)?;
            println!("wrote {}", out.display());
        }
        Command::Diag { n, d, resamples } => {
            let options = DiagOptions {
                n,
                d,
                resamples,
                seed: seed.unwrap_or(0),
                ..DiagOptions::default()
            };
            let report = run_diagnostics(&options)?;
            print!("{}", report.render());
            if let Some(dir) = out {
                write_report(&report, &dir)?;
            }
            if !report.passed {
                return Err(BenchError::Run("diagnostics failed".into()));
            }
        }
        Command::SubsampleStudy { config } => {
            let spec = StudySpec::load(&config)?;
            let report = run_study(&spec, &spec_dir(&config), seed.map(|s| vec![s]), workers, out)?;
            print!("{}", report.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
