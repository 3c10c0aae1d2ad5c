//! End-to-end runs on synthetic sources.
//!
//! The vector pipeline fills a sample queue, perturbs an evaluation batch,
//! fits a codebook offline and quantizes a fresh batch with it. The scalar
//! pipelines push a source through an activation (or take it directly),
//! quantize each coordinate and pack the bin indices into token ids.
//!
//! Source draws are seeded by `source.seed`; every algorithmic random choice
//! is seeded by the experiment seed. Each phase has its own substream.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Mode, ModeParams, ScalarParams, VpParams};
use crate::codebook::{kmeans_fit, Codebook, KMeansParams, KMeansReport};
use crate::error::{Error, Result};
use crate::latent::{distance, LatentVector, SampleQueue, SampleView};
use crate::metrics::{cvu, mse, norm_loss, NormLossParams, UsageCounts};
use crate::perturb::{perturb_batch, PerturbConfig, PerturbOutcome};
use crate::rng::substream;
use crate::scalar::{
    activate, fsp_propose, fsp_quantize, fsq_quantize, index_pack, mixture_forward, FspConfig,
    GaussianGrid, MixtureBranch, ScalarCode,
};
use crate::source::SourceSpec;

/// Source-side substreams.
const SRC_QUEUE: u64 = 0;
const SRC_PERTURB_EVAL: u64 = 1;
const SRC_FIT: u64 = 2;
const SRC_QUANT_EVAL: u64 = 3;
const SRC_SCALAR_EVAL: u64 = 4;

/// Algorithm-side substreams.
const ALG_SUBSAMPLE: u64 = 0;
const ALG_PERTURB: u64 = 1;
const ALG_KMEANS: u64 = 2;
const ALG_FSP: u64 = 3;

const QUEUE_BATCH: usize = 4096;

/// Summary of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: String,
    pub source: String,
    pub dim: usize,
    pub k_effective: u64,
    pub cvu: f64,
    pub mse: f64,
    pub entropy_nats: f64,
    pub effective_codes: f64,
    /// Normalization regularizer of the evaluation batch (pre-activation for
    /// the scalar modes); absent when the activation is bypassed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_quantization_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_displacement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_rejection_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_rejection_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub support_violations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perturbed_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub queue_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmeans_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmeans_inertia: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kmeans_converged: Option<bool>,
    pub invented_defaults: Vec<String>,
    /// Seconds per phase. Informational; left out of serialized reports
    /// unless requested, so reports stay byte-identical across runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<BTreeMap<String, f64>>,
}

impl RunReport {
    fn new(cfg: &ExperimentConfig, k_effective: u64) -> Self {
        Self {
            mode: cfg.mode.name().to_owned(),
            source: cfg.source.name().to_owned(),
            dim: cfg.source.dim,
            k_effective,
            cvu: 0.0,
            mse: 0.0,
            entropy_nats: 0.0,
            effective_codes: 0.0,
            norm_loss: None,
            median_radius: None,
            median_quantization_error: None,
            median_displacement: None,
            acceptance_rate: None,
            support_rejection_rate: None,
            ratio_rejection_rate: None,
            support_violations: None,
            perturbed_fraction: None,
            queue_len: None,
            kmeans_iterations: None,
            kmeans_inertia: None,
            kmeans_converged: None,
            invented_defaults: cfg.invented_defaults.clone(),
            wall_time: None,
        }
    }

    fn set_usage(&mut self, usage: &UsageCounts) -> Result<()> {
        self.cvu = cvu(usage)?;
        self.entropy_nats = usage.entropy()?;
        self.effective_codes = usage.effective_codes()?;
        Ok(())
    }

    /// Pretty JSON with a trailing newline; timings only when `timings`.
    pub fn to_json(&self, timings: bool) -> Result<String> {
        let mut shown = self.clone();
        if !timings {
            shown.wall_time = None;
        }
        let mut s = serde_json::to_string_pretty(&shown)?;
        s.push('\n');
        Ok(s)
    }

    /// Every numeric field is finite and every rate lies in `[0, 1]`.
    pub fn check_consistency(&self) -> Result<()> {
        let mut numbers = vec![self.cvu, self.mse, self.entropy_nats, self.effective_codes];
        numbers.extend(
            [
                self.norm_loss,
                self.median_radius,
                self.median_quantization_error,
                self.median_displacement,
                self.kmeans_inertia,
            ]
            .into_iter()
            .flatten(),
        );
        if numbers.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("report contains a non-finite value"));
        }
        let rates = [
            self.acceptance_rate,
            self.support_rejection_rate,
            self.ratio_rejection_rate,
            self.perturbed_fraction,
        ];
        if rates
            .into_iter()
            .flatten()
            .any(|r| !(0.0..=1.0).contains(&r))
        {
            return Err(Error::invalid("report rate outside [0, 1]"));
        }
        if !(self.cvu > 0.0 && self.cvu <= 1.0 + 1e-12) {
            return Err(Error::invalid(format!("cvu {} outside (0, 1]", self.cvu)));
        }
        if let (Some(a), Some(s), Some(r)) = (
            self.acceptance_rate,
            self.support_rejection_rate,
            self.ratio_rejection_rate,
        ) {
            if (a + s + r - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(
                    "acceptance and rejection rates do not sum to one",
                ));
            }
        }
        Ok(())
    }
}

/// A run's report and its CSV traces, keyed by file name.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub traces: BTreeMap<String, String>,
}

/// Runs whichever pipeline the config selects.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.mode {
        Mode::Vp => run_vp_pipeline(cfg),
        Mode::Fsp | Mode::Fsq | Mode::GaussianGrid => run_scalar_pipeline(cfg),
    }
}

struct Timer {
    phases: BTreeMap<String, f64>,
    last: Instant,
}

impl Timer {
    fn start() -> Self {
        Self {
            phases: BTreeMap::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, phase: &str) {
        let now = Instant::now();
        self.phases
            .insert(phase.to_owned(), (now - self.last).as_secs_f64());
        info!("{phase}: {:.3}s", (now - self.last).as_secs_f64());
        self.last = now;
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty set");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fills a queue from `source` until `fill` vectors were inserted.
pub fn fill_queue(source: &SourceSpec, params: &VpParams, seed: u64) -> Result<SampleQueue> {
    let mut queue = SampleQueue::new(params.queue_capacity, source.dim)?;
    let mut source_rng = substream(source.seed, SRC_QUEUE);
    let mut pick_rng = substream(seed, ALG_SUBSAMPLE);
    let mut inserted = 0;
    while inserted < params.queue_fill {
        let batch = source.sample(QUEUE_BATCH, &mut source_rng)?;
        inserted += queue.push_subsampled(&batch, params.subsample_fraction, &mut pick_rng)?;
    }
    Ok(queue)
}

/// Per-token perturbation statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbStats {
    pub accepted: u64,
    pub rejected_by_support: u64,
    pub rejected_by_ratio: u64,
    /// Accepted outcomes with `‖z − z̃‖ > η·D_M(z̃)`.
    pub support_violations: u64,
    pub median_radius: f64,
    pub median_displacement: f64,
}

impl PerturbStats {
    pub fn collect(inputs: &[LatentVector], outcomes: &[PerturbOutcome]) -> Self {
        let mut stats = Self {
            accepted: 0,
            rejected_by_support: 0,
            rejected_by_ratio: 0,
            support_violations: 0,
            median_radius: 0.0,
            median_displacement: 0.0,
        };
        let mut radii = Vec::with_capacity(outcomes.len());
        let mut moves = Vec::with_capacity(outcomes.len());
        for (z, out) in inputs.iter().zip(outcomes) {
            let moved = distance(z, &out.result);
            if out.accepted {
                stats.accepted += 1;
                if moved > out.proposal_radius {
                    stats.support_violations += 1;
                }
            } else if out.rejected_by_support {
                stats.rejected_by_support += 1;
            } else {
                stats.rejected_by_ratio += 1;
            }
            radii.push(out.radius);
            moves.push(moved);
        }
        if !outcomes.is_empty() {
            stats.median_radius = median(&mut radii);
            stats.median_displacement = median(&mut moves);
        }
        stats
    }

    pub fn total(&self) -> u64 {
        self.accepted + self.rejected_by_support + self.rejected_by_ratio
    }
}

fn perturb_trace(inputs: &[LatentVector], outcomes: &[PerturbOutcome]) -> String {
    let mut csv = String::from(
        "index,accepted,rejected_by_support,log_alpha,radius,proposal_radius,displacement\n",
    );
    for (i, (z, out)) in inputs.iter().zip(outcomes).enumerate() {
        let log_alpha = if out.log_alpha == f64::NEG_INFINITY {
            "-inf".to_owned()
        } else {
            out.log_alpha.to_string()
        };
        writeln!(
            csv,
            "{i},{},{},{log_alpha},{},{},{}",
            out.accepted as u8,
            out.rejected_by_support as u8,
            out.radius,
            out.proposal_radius,
            distance(z, &out.result)
        )
        .unwrap();
    }
    csv
}

fn usage_trace(usage: &UsageCounts, label: &str) -> String {
    let mut csv = format!("{label},count\n");
    for (j, c) in usage.counts().iter().enumerate() {
        writeln!(csv, "{j},{c}").unwrap();
    }
    csv
}

/// Codebook fitted on `fit_samples` fresh source draws.
pub fn fit_codebook(cfg: &ExperimentConfig, params: &VpParams) -> Result<(Codebook, KMeansReport)> {
    let fit = cfg
        .source
        .sample(params.fit_samples, &mut substream(cfg.source.seed, SRC_FIT))?;
    let view = SampleView::from_vectors(cfg.source.dim, &fit)?;
    let kmeans = KMeansParams {
        k: params.radius.codebook_size,
        seed: kmeans_seed(cfg.seed),
        max_iter: params.max_iter,
        tol: params.tol,
    };
    kmeans_fit(&view, &kmeans)
}

fn kmeans_seed(seed: u64) -> u64 {
    use rand::Rng;
    substream(seed, ALG_KMEANS).random()
}

fn perturb_seed(seed: u64) -> u64 {
    use rand::Rng;
    substream(seed, ALG_PERTURB).random()
}

/// Queue fill, perturbation, offline codebook fit, inference quantization.
pub fn run_vp_pipeline(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let params = match &cfg.params {
        ModeParams::Vp(p) => p,
        ModeParams::Scalar(_) => return Err(Error::invalid("run_vp_pipeline needs mode vp")),
    };
    let k = params.radius.codebook_size;
    let mut report = RunReport::new(cfg, k as u64);
    let mut timer = Timer::start();

    let queue = fill_queue(&cfg.source, params, cfg.seed)?;
    let samples = queue.snapshot();
    report.queue_len = Some(samples.len());
    timer.lap("queue_fill");

    let pcfg = PerturbConfig::new(params.radius, cfg.source.dim)?;
    let eval = cfg.source.sample(
        params.eval_samples,
        &mut substream(cfg.source.seed, SRC_PERTURB_EVAL),
    )?;
    let outcomes = perturb_batch(&eval, &samples, &pcfg, perturb_seed(cfg.seed))?;
    let stats = PerturbStats::collect(&eval, &outcomes);
    let n = stats.total() as f64;
    report.acceptance_rate = Some(stats.accepted as f64 / n);
    report.support_rejection_rate = Some(stats.rejected_by_support as f64 / n);
    report.ratio_rejection_rate = Some(stats.rejected_by_ratio as f64 / n);
    report.support_violations = Some(stats.support_violations);
    report.median_radius = Some(stats.median_radius);
    report.median_displacement = Some(stats.median_displacement);
    if eval.len() >= 2 {
        report.norm_loss = Some(norm_loss(&eval, &NormLossParams::new(1.0, 1.0, 1.0)?)?);
    }
    let trace = perturb_trace(&eval, &outcomes);
    drop(outcomes);
    timer.lap("perturb");

    let (codebook, fit) = fit_codebook(cfg, params)?;
    report.kmeans_iterations = Some(fit.iterations);
    report.kmeans_inertia = Some(fit.final_inertia);
    report.kmeans_converged = Some(fit.converged);
    timer.lap("codebook_fit");

    let test = cfg.source.sample(
        params.eval_samples,
        &mut substream(cfg.source.seed, SRC_QUANT_EVAL),
    )?;
    let (indices, counts) = codebook.quantize_batch(&test)?;
    let mut errors: Vec<f64> = test
        .iter()
        .zip(&indices)
        .map(|(z, &j)| distance(z, codebook.code(j)))
        .collect();
    let reconstructed: Vec<&[f64]> = indices.iter().map(|&j| codebook.code(j)).collect();
    report.mse = mse(&test, &reconstructed)?;
    report.median_quantization_error = Some(median(&mut errors));
    let usage = UsageCounts::new(counts)?;
    report.set_usage(&usage)?;
    timer.lap("quantize");

    report.wall_time = Some(timer.phases);
    let mut traces = BTreeMap::new();
    traces.insert("perturb_trace.csv".to_owned(), trace);
    traces.insert("usage.csv".to_owned(), usage_trace(&usage, "code"));
    Ok(RunOutput { report, traces })
}

/// Activation (or bypass), scalar quantization, token packing and usage.
pub fn run_scalar_pipeline(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let params: &ScalarParams = match &cfg.params {
        ModeParams::Scalar(p) => p,
        ModeParams::Vp(_) => return Err(Error::invalid("run_scalar_pipeline needs a scalar mode")),
    };
    let levels = &params.levels;
    let k: u64 = crate::scalar::codebook_size(levels);
    let k_slots = usize::try_from(k).map_err(|_| Error::invalid("codebook too large to tally"))?;
    let mut report = RunReport::new(cfg, k);
    let mut timer = Timer::start();

    let raw = cfg.source.sample(
        params.eval_samples,
        &mut substream(cfg.source.seed, SRC_SCALAR_EVAL),
    )?;
    let inputs: Vec<LatentVector> = match cfg.mode {
        Mode::GaussianGrid => raw.clone(),
        _ if params.bypass_activation => raw.clone(),
        _ => raw
            .iter()
            .map(|a| activate(a, params.activation))
            .collect::<Result<_>>()?,
    };
    let target = match cfg.mode {
        Mode::GaussianGrid => Some(1.0),
        _ if params.bypass_activation => None,
        _ => Some(params.activation.target_variance()),
    };
    if let (Some(target), true) = (target, raw.len() >= 2) {
        report.norm_loss = Some(norm_loss(&raw, &NormLossParams::new(1.0, 1.0, target)?)?);
    }
    timer.lap("sample");

    let grid = match cfg.mode {
        Mode::GaussianGrid => Some(GaussianGrid::new(levels[0])?),
        _ => None,
    };
    let codes: Vec<ScalarCode> = inputs
        .iter()
        .map(|z| match cfg.mode {
            Mode::Fsp => fsp_quantize(z, levels),
            Mode::Fsq => fsq_quantize(z, levels),
            Mode::GaussianGrid => grid.as_ref().expect("grid").quantize(z),
            Mode::Vp => unreachable!(),
        })
        .collect::<Result<_>>()?;
    let tokens: Vec<u64> = codes
        .iter()
        .map(|c| index_pack(&c.indices, levels))
        .collect::<Result<_>>()?;
    let values: Vec<&[f64]> = codes.iter().map(|c| c.value.as_slice()).collect();
    report.mse = mse(&inputs, &values)?;
    let usage = UsageCounts::from_ids(tokens.iter().copied(), k_slots)?;
    report.set_usage(&usage)?;
    timer.lap("quantize");

    if cfg.mode == Mode::Fsp {
        let fsp = FspConfig {
            levels: levels.clone(),
            eta: params.eta,
            activation: params.activation,
            mixture_p: params.mixture_p,
        };
        let mut rng = substream(cfg.seed, ALG_FSP);
        let mut kept = 0u64;
        let mut perturbed = 0u64;
        for z in &inputs {
            if fsp_propose(z, &fsp, &mut rng)?.1 {
                kept += 1;
            }
            if mixture_forward(z, &fsp, &mut rng)?.1 == MixtureBranch::Perturbed {
                perturbed += 1;
            }
        }
        let n = inputs.len() as f64;
        report.acceptance_rate = Some(kept as f64 / n);
        report.perturbed_fraction = Some(perturbed as f64 / n);
        timer.lap("perturb");
    }

    report.wall_time = Some(timer.phases);
    let mut traces = BTreeMap::new();
    traces.insert("usage.csv".to_owned(), usage_trace(&usage, "token"));
    traces.insert("bins.csv".to_owned(), bin_trace(&codes, levels));
    Ok(RunOutput { report, traces })
}

/// Per-dimension bin counts and frequencies.
pub fn bin_frequencies(codes: &[ScalarCode], levels: &[usize]) -> Vec<Vec<f64>> {
    let mut counts: Vec<Vec<u64>> = levels.iter().map(|&l| vec![0; l]).collect();
    for c in codes {
        for (dim, &i) in c.indices.iter().enumerate() {
            counts[dim][i] += 1;
        }
    }
    let n = codes.len().max(1) as f64;
    counts
        .into_iter()
        .map(|row| row.into_iter().map(|c| c as f64 / n).collect())
        .collect()
}

fn bin_trace(codes: &[ScalarCode], levels: &[usize]) -> String {
    let mut csv = String::from("dim,bin,frequency\n");
    for (dim, row) in bin_frequencies(codes, levels).iter().enumerate() {
        for (bin, f) in row.iter().enumerate() {
            writeln!(csv, "{dim},{bin},{f}").unwrap();
        }
    }
    csv
}
