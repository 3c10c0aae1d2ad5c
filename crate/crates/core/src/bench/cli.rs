//! `vpquant` command line.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! failures while running.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;

use super::config::ExperimentConfig;
use super::figure::{figure_csv, figure_fsp_vs_fsq};
use super::pipeline::run;
use super::selftest::run_selftest;
use crate::codebook::{kmeans_fit, Codebook, CodebookMeta, KMeansParams};
use crate::error::Error;
use crate::latent::{distance, SampleView};
use crate::metrics::{mse, MetricReport, UsageCounts};
use crate::rng::seeded;

#[derive(Debug, Parser)]
#[command(
    name = "vpquant",
    version,
    about = "Codebook-free vector and scalar quantization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the pipeline described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include per-phase wall times in the report.
        #[arg(long)]
        timings: bool,
    },
    /// Write the FSQ/FSP output distributions on a uniform source as CSV.
    Figure {
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a K-Means++ codebook to a latent dump.
    Codebook {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Codebook path; the JSON sidecar goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Quantize a latent dump with a saved codebook and report CVU and MSE.
    Quantize {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// JSON metric report.
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV of the chosen code per row.
        #[arg(long)]
        indices: Option<PathBuf>,
    },
    /// Draw from a config's source and write a latent dump.
    Sample {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(Error),
    /// A runtime error already rendered with its context.
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            out,
            timings,
        } => cmd_run(&config, out, timings),
        Command::Figure {
            levels,
            samples,
            seed,
            out,
        } => {
            let rows = figure_fsp_vs_fsq(levels, samples, seed)
                .map_err(|e| Failure::Config(e.to_string()))?;
            write_file(&out, &figure_csv(&rows))
        }
        Command::Codebook {
            input,
            k,
            seed,
            max_iter,
            tol,
            out,
        } => cmd_codebook(&input, k, seed, max_iter, tol, &out),
        Command::Quantize {
            codebook,
            input,
            out,
            indices,
        } => cmd_quantize(&codebook, &input, &out, indices.as_deref()),
        Command::Sample { config, n, out } => {
            let cfg = load_config(&config)?;
            let draws = cfg.source.sample(n, &mut seeded(cfg.source.seed))?;
            SampleView::from_vectors(cfg.source.dim, &draws)?.save(&out)?;
            info!("wrote {} samples to {}", n, out.display());
            Ok(())
        }
        Command::Selftest => {
            let checks = run_selftest();
            for c in &checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            match checks.iter().filter(|c| !c.passed).count() {
                0 => Ok(()),
                n => Err(Failure::Runtime(Error::invalid(format!(
                    "{n} selftest checks failed"
                )))),
            }
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::load(path).map_err(|e| Failure::Config(e.to_string()))
}

fn load_dump(path: &Path) -> Result<SampleView, Failure> {
    SampleView::load(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn cmd_run(config: &Path, out: Option<PathBuf>, timings: bool) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let dir = out
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Failure::Config("no output directory: pass --out or set `output`".into()))?;
    let output = run(&cfg)?;
    output.report.check_consistency()?;
    fs::create_dir_all(&dir)?;
    write_file(&dir.join("report.json"), &output.report.to_json(timings)?)?;
    for (name, csv) in &output.traces {
        write_file(&dir.join(name), csv)?;
    }
    Ok(())
}

fn cmd_codebook(
    input: &Path,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
    out: &Path,
) -> Result<(), Failure> {
    if k == 0 || max_iter == 0 || !tol.is_finite() || tol < 0.0 {
        return Err(Failure::Config(
            "k and max-iter must be positive and tol finite and non-negative".into(),
        ));
    }
    let samples = load_dump(input)?;
    let params = KMeansParams {
        k,
        seed,
        max_iter,
        tol,
    };
    let (codebook, report) = kmeans_fit(&samples, &params)?;
    let meta = CodebookMeta {
        k,
        dim: codebook.dim(),
        seed,
        iterations: report.iterations,
        inertia: report.final_inertia,
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    codebook.save(out, Some(&meta))?;
    info!("wrote {} codes to {}", codebook.len(), out.display());
    Ok(())
}

fn cmd_quantize(
    codebook: &Path,
    input: &Path,
    out: &Path,
    indices_out: Option<&Path>,
) -> Result<(), Failure> {
    let codebook = Codebook::load(codebook)
        .map_err(|e| Failure::Input(format!("{}: {e}", codebook.display())))?;
    let samples = load_dump(input)?;
    let rows: Vec<&[f64]> = samples.rows().collect();
    let (indices, counts) = codebook.quantize_batch(&rows)?;
    let codes: Vec<&[f64]> = indices.iter().map(|&j| codebook.code(j)).collect();
    let report = MetricReport::new(&UsageCounts::new(counts)?, mse(&rows, &codes)?)?;
    let mut json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    json.push('\n');
    write_file(out, &json)?;
    if let Some(path) = indices_out {
        let mut csv = String::from("row,code,error\n");
        for (i, (&j, z)) in indices.iter().zip(&rows).enumerate() {
            csv.push_str(&format!("{i},{j},{}\n", distance(z, codebook.code(j))));
        }
        write_file(path, &csv)?;
    }
    Ok(())
}
