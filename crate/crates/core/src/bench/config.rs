//! Experiment configuration.
//!
//! Configs are TOML: a few top-level keys, a `[source]` table and one table
//! per pipeline family.
//!
//! ```toml
//! mode = "vp"            # vp | fsp | fsq | gaussian_grid
//! seed = 7
//! output = "runs/vp"     # directory for report.json and CSV traces
//!
//! [source]
//! kind = "uniform_cube"  # uniform_cube | gaussian | gaussian_mixture | annulus
//! dim = 3
//!
//! [vp]
//! codebook_size = 256
//! eta = 1.0
//! knn_k = 3
//!
//! [scalar]
//! levels = [8, 6, 5]
//! activation = "tanh_rescaled"
//! ```
//!
//! Keys left out fall back to defaults. Defaults that are engineering
//! choices rather than published settings are listed in the run report under
//! `invented_defaults`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density::{RadiusParams, DEFAULT_ETA, DEFAULT_KNN_K};
use crate::error::{Error, Result};
use crate::latent::{DEFAULT_QUEUE_CAPACITY, DEFAULT_SUBSAMPLE_FRACTION};
use crate::scalar::{default_levels, ActivationKind, DEFAULT_MIXTURE_P};
use crate::source::SourceSpec;

pub const DEFAULT_FIT_SAMPLES: usize = 100_000;
pub const DEFAULT_EVAL_SAMPLES: usize = 100_000;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Vp,
    Fsp,
    Fsq,
    GaussianGrid,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Vp => "vp",
            Mode::Fsp => "fsp",
            Mode::Fsq => "fsq",
            Mode::GaussianGrid => "gaussian_grid",
        }
    }
}

/// `[vp]` table as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VpSection {
    pub codebook_size: Option<usize>,
    pub eta: Option<f64>,
    pub knn_k: Option<usize>,
    pub queue_capacity: Option<usize>,
    pub subsample_fraction: Option<f64>,
    /// Vectors to insert into the queue before perturbing.
    pub queue_fill: Option<usize>,
    pub fit_samples: Option<usize>,
    pub eval_samples: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
}

/// `[scalar]` table as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarSection {
    pub levels: Option<Vec<usize>>,
    /// Picks the standard level list when `levels` is absent.
    pub codebook_size: Option<usize>,
    pub activation: Option<ActivationKind>,
    /// Treat source draws as `[0, 1]` latents directly.
    #[serde(default)]
    pub bypass_activation: bool,
    pub eta: Option<f64>,
    pub mixture_p: Option<f64>,
    pub bins: Option<usize>,
    pub eval_samples: Option<usize>,
}

/// Config file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub source: SourceSpec,
    #[serde(default)]
    pub vp: VpSection,
    #[serde(default)]
    pub scalar: ScalarSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VpParams {
    pub radius: RadiusParams,
    pub queue_capacity: usize,
    pub subsample_fraction: f64,
    pub queue_fill: usize,
    pub fit_samples: usize,
    pub eval_samples: usize,
    pub max_iter: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarParams {
    /// Per-dimension level counts; for the Gaussian grid every entry is the
    /// bin count.
    pub levels: Vec<usize>,
    pub activation: ActivationKind,
    pub bypass_activation: bool,
    pub eta: f64,
    pub mixture_p: f64,
    pub eval_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModeParams {
    Vp(VpParams),
    Scalar(ScalarParams),
}

/// A validated experiment with every default resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub source: SourceSpec,
    pub params: ModeParams,
    /// Keys that fell back to engineering defaults.
    pub invented_defaults: Vec<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        Self::resolve(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn resolve(file: ConfigFile) -> Result<Self> {
        let source = file.source.validated()?;
        let mut invented = Vec::new();
        let params = match file.mode {
            Mode::Vp => ModeParams::Vp(resolve_vp(&file.vp, &mut invented)?),
            Mode::Fsp | Mode::Fsq | Mode::GaussianGrid => {
                let p = resolve_scalar(file.mode, &file.scalar, source.dim, &mut invented)?;
                if p.levels.len() != source.dim {
                    return Err(Error::invalid(format!(
                        "source dimension {} does not match {} quantized dimensions",
                        source.dim,
                        p.levels.len()
                    )));
                }
                ModeParams::Scalar(p)
            }
        };
        Ok(Self {
            mode: file.mode,
            seed: file.seed,
            output: file.output,
            source,
            params,
            invented_defaults: invented,
        })
    }

    pub fn vp(&self) -> Option<&VpParams> {
        match &self.params {
            ModeParams::Vp(p) => Some(p),
            ModeParams::Scalar(_) => None,
        }
    }

    pub fn scalar(&self) -> Option<&ScalarParams> {
        match &self.params {
            ModeParams::Scalar(p) => Some(p),
            ModeParams::Vp(_) => None,
        }
    }
}

fn or_invented<T>(value: Option<T>, default: T, key: &str, invented: &mut Vec<String>) -> T {
    value.unwrap_or_else(|| {
        invented.push(key.to_owned());
        default
    })
}

fn resolve_vp(s: &VpSection, invented: &mut Vec<String>) -> Result<VpParams> {
    let k = s
        .codebook_size
        .ok_or_else(|| Error::invalid("mode vp requires vp.codebook_size"))?;
    let eta = or_invented(s.eta, DEFAULT_ETA, "vp.eta", invented);
    let knn_k = or_invented(s.knn_k, DEFAULT_KNN_K, "vp.knn_k", invented);
    let radius = RadiusParams::new(k, eta, knn_k)?;
    let queue_capacity = or_invented(
        s.queue_capacity,
        DEFAULT_QUEUE_CAPACITY,
        "vp.queue_capacity",
        invented,
    );
    let subsample_fraction = or_invented(
        s.subsample_fraction,
        DEFAULT_SUBSAMPLE_FRACTION,
        "vp.subsample_fraction",
        invented,
    );
    let queue_fill = or_invented(s.queue_fill, queue_capacity, "vp.queue_fill", invented);
    let fit_samples = or_invented(
        s.fit_samples,
        DEFAULT_FIT_SAMPLES.max(k),
        "vp.fit_samples",
        invented,
    );
    let eval_samples = or_invented(
        s.eval_samples,
        DEFAULT_EVAL_SAMPLES,
        "vp.eval_samples",
        invented,
    );
    let max_iter = or_invented(s.max_iter, DEFAULT_MAX_ITER, "vp.max_iter", invented);
    let tol = or_invented(s.tol, DEFAULT_TOL, "vp.tol", invented);

    if queue_capacity == 0 {
        return Err(Error::invalid("vp.queue_capacity must be at least 1"));
    }
    if !(subsample_fraction > 0.0 && subsample_fraction <= 1.0) {
        return Err(Error::invalid("vp.subsample_fraction must lie in (0, 1]"));
    }
    let queued = queue_fill.min(queue_capacity);
    let needed = knn_k.max(crate::density::cell_count(queued.max(1), k));
    if queued < needed {
        return Err(Error::invalid(format!(
            "queue would hold {queued} vectors, fewer than the {needed} neighbors required"
        )));
    }
    if fit_samples < k {
        return Err(Error::invalid(format!(
            "vp.fit_samples ({fit_samples}) must be >= codebook size ({k})"
        )));
    }
    if eval_samples == 0 {
        return Err(Error::invalid("vp.eval_samples must be at least 1"));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::invalid("vp.tol must be non-negative"));
    }
    Ok(VpParams {
        radius,
        queue_capacity,
        subsample_fraction,
        queue_fill,
        fit_samples,
        eval_samples,
        max_iter,
        tol,
    })
}

fn resolve_scalar(
    mode: Mode,
    s: &ScalarSection,
    dim: usize,
    invented: &mut Vec<String>,
) -> Result<ScalarParams> {
    let levels = if mode == Mode::GaussianGrid {
        let bins = s
            .bins
            .ok_or_else(|| Error::invalid("mode gaussian_grid requires scalar.bins"))?;
        if bins < 2 {
            return Err(Error::invalid("scalar.bins must be at least 2"));
        }
        vec![bins; dim]
    } else {
        match (&s.levels, s.codebook_size) {
            (Some(levels), _) => levels.clone(),
            (None, Some(k)) => default_levels(k)
                .ok_or_else(|| {
                    Error::invalid(format!(
                        "no standard level list for codebook size {k}; give scalar.levels"
                    ))
                })?
                .to_vec(),
            (None, None) => {
                return Err(Error::invalid(format!(
                    "mode {} requires scalar.levels or scalar.codebook_size",
                    mode.name()
                )))
            }
        }
    };
    if levels.is_empty() || levels.iter().any(|&l| l < 2) {
        return Err(Error::invalid(
            "scalar.levels must be non-empty with every entry >= 2",
        ));
    }
    let activation = match (mode, s.activation) {
        (Mode::GaussianGrid, a) => a.unwrap_or(ActivationKind::NormalCdf),
        (_, Some(a)) => a,
        (_, None) if s.bypass_activation => ActivationKind::NormalCdf,
        (_, None) => or_invented(
            None,
            ActivationKind::NormalCdf,
            "scalar.activation",
            invented,
        ),
    };
    let eta = if mode == Mode::Fsp {
        or_invented(s.eta, 1.0, "scalar.eta", invented)
    } else {
        s.eta.unwrap_or(1.0)
    };
    let mixture_p = s.mixture_p.unwrap_or(DEFAULT_MIXTURE_P);
    if !(0.0..=1.0).contains(&mixture_p) {
        return Err(Error::invalid("scalar.mixture_p must lie in [0, 1]"));
    }
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::invalid("scalar.eta must be finite and >= 0"));
    }
    let eval_samples = or_invented(
        s.eval_samples,
        DEFAULT_EVAL_SAMPLES,
        "scalar.eval_samples",
        invented,
    );
    if eval_samples == 0 {
        return Err(Error::invalid("scalar.eval_samples must be at least 1"));
    }
    Ok(ScalarParams {
        levels,
        activation,
        bypass_activation: s.bypass_activation,
        eta,
        mixture_p,
        eval_samples,
    })
}
