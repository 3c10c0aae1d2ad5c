//! Finite scalar perturbation on `[0, 1]^d` and the fixed scalar baselines.
//!
//! Pre-activations are squashed to the unit interval by a CDF-like
//! activation. During training each coordinate is either perturbed by
//! bounded uniform noise (kept only if the whole vector stays inside the
//! cube) or snapped to the centroid of its equal-width bin. The fixed-grid
//! FSQ rounding and a Gaussian-percentile grid are provided as baselines.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::latent::{check_finite, LatentVector};

/// Monotone activation mapping ℝ onto `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    /// `(tanh(a) + 1) / 2`
    TanhRescaled,
    /// Standard normal CDF `Φ(a)`.
    NormalCdf,
    /// `1 / (1 + e^{-a})`
    Sigmoid,
}

impl ActivationKind {
    /// Pre-activation variance under which the output is close to uniform.
    pub fn target_variance(self) -> f64 {
        match self {
            ActivationKind::TanhRescaled => 0.8225,
            ActivationKind::NormalCdf => 1.0,
            ActivationKind::Sigmoid => 3.29,
        }
    }

    pub fn apply(self, a: f64) -> f64 {
        match self {
            ActivationKind::TanhRescaled => 0.5 * (a.tanh() + 1.0),
            ActivationKind::NormalCdf => standard_normal().cdf(a),
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-a).exp()),
        }
    }
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Elementwise activation.
pub fn activate(a: &[f64], kind: ActivationKind) -> Result<LatentVector> {
    check_finite(a)?;
    LatentVector::new(a.iter().map(|&x| kind.apply(x)).collect())
}

/// Level lists for the standard codebook sizes.
pub fn default_levels(codebook_size: usize) -> Option<&'static [usize]> {
    match codebook_size {
        256 => Some(&[8, 6, 5]),
        1024 => Some(&[8, 5, 5, 5]),
        4096 => Some(&[7, 5, 5, 5, 5]),
        16384 => Some(&[8, 8, 8, 6, 5]),
        _ => None,
    }
}

pub const DEFAULT_MIXTURE_P: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FspConfig {
    /// Levels `L_i` per dimension, each at least 2.
    pub levels: Vec<usize>,
    /// Noise scale η; the per-dimension noise half-width is `η / (2 L_i)`.
    pub eta: f64,
    pub activation: ActivationKind,
    /// Probability of the perturbation branch in [`mixture_forward`].
    pub mixture_p: f64,
}

impl FspConfig {
    pub fn new(levels: Vec<usize>, eta: f64, activation: ActivationKind) -> Result<Self> {
        let cfg = Self {
            levels,
            eta,
            activation,
            mixture_p: DEFAULT_MIXTURE_P,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        validate_levels(&self.levels)?;
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!(
                "eta must be finite and >= 0, got {}",
                self.eta
            )));
        }
        if !(0.0..=1.0).contains(&self.mixture_p) {
            return Err(Error::invalid(format!(
                "mixture probability must lie in [0, 1], got {}",
                self.mixture_p
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    /// Effective codebook size `∏ L_i`.
    pub fn codebook_size(&self) -> u64 {
        codebook_size(&self.levels)
    }
}

pub fn codebook_size(levels: &[usize]) -> u64 {
    levels.iter().map(|&l| l as u64).product()
}

fn validate_levels(levels: &[usize]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::invalid("level list is empty"));
    }
    if let Some(&l) = levels.iter().find(|&&l| l < 2) {
        return Err(Error::invalid(format!(
            "every level count must be >= 2, got {l}"
        )));
    }
    levels
        .iter()
        .try_fold(1u64, |acc, &l| acc.checked_mul(l as u64))
        .ok_or_else(|| Error::invalid("product of levels overflows u64"))?;
    Ok(())
}

fn check_unit_cube(z: &[f64], levels: &[usize]) -> Result<()> {
    crate::latent::check_dim(levels.len(), z.len())?;
    check_finite(z)?;
    match z.iter().position(|x| !(0.0..=1.0).contains(x)) {
        Some(dim) => Err(Error::OutOfRange { dim, value: z[dim] }),
        None => Ok(()),
    }
}

/// Bin centroids `(ℓ + ½) / L` for `ℓ = 0..L`.
pub fn centroids(levels: usize) -> Result<Vec<f64>> {
    if levels < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 levels, got {levels}"
        )));
    }
    let l = levels as f64;
    Ok((0..levels).map(|i| (i as f64 + 0.5) / l).collect())
}

/// Bounded perturbation: adds `U(−η/(2L_i), η/(2L_i))` to every coordinate
/// and keeps the result only if it stays inside `[0, 1]^d`.
pub fn fsp_perturb<R: Rng + ?Sized>(
    z: &[f64],
    cfg: &FspConfig,
    rng: &mut R,
) -> Result<LatentVector> {
    Ok(fsp_propose(z, cfg, rng)?.0)
}

/// As [`fsp_perturb`], also reporting whether the proposal was kept.
pub fn fsp_propose<R: Rng + ?Sized>(
    z: &[f64],
    cfg: &FspConfig,
    rng: &mut R,
) -> Result<(LatentVector, bool)> {
    check_unit_cube(z, &cfg.levels)?;
    let proposal: Vec<f64> = z
        .iter()
        .zip(&cfg.levels)
        .map(|(&x, &l)| {
            let half = cfg.eta / (2.0 * l as f64);
            // `random::<f64>()` is in [0, 1); map onto [-half, half).
            x + half * (2.0 * rng.random::<f64>() - 1.0)
        })
        .collect();
    if proposal.iter().all(|x| (0.0..=1.0).contains(x)) {
        Ok((LatentVector::from_trusted(proposal), true))
    } else {
        Ok((LatentVector::from_trusted(z.to_vec()), false))
    }
}

/// Per-dimension quantization result: bin indices and reproduction values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarCode {
    pub indices: Vec<usize>,
    pub value: Vec<f64>,
}

/// Centroid quantization `ℓ_i = clip(⌊L_i z_i⌋, 0, L_i − 1)`, value
/// `(ℓ_i + ½) / L_i`.
pub fn fsp_quantize(z: &[f64], levels: &[usize]) -> Result<ScalarCode> {
    validate_levels(levels)?;
    check_unit_cube(z, levels)?;
    let (indices, value) = z
        .iter()
        .zip(levels)
        .map(|(&x, &l)| {
            let lf = l as f64;
            let idx = ((lf * x).floor() as usize).min(l - 1);
            (idx, (idx as f64 + 0.5) / lf)
        })
        .unzip();
    Ok(ScalarCode { indices, value })
}

/// FSQ baseline: rounds to the boundary grid `{0, 1/(L−1), …, 1}`, halves
/// away from zero.
pub fn fsq_quantize(z: &[f64], levels: &[usize]) -> Result<ScalarCode> {
    validate_levels(levels)?;
    check_unit_cube(z, levels)?;
    let (indices, value) = z
        .iter()
        .zip(levels)
        .map(|(&x, &l)| {
            let steps = (l - 1) as f64;
            let idx = (x * steps).round() as usize;
            (idx, idx as f64 / steps)
        })
        .unzip();
    Ok(ScalarCode { indices, value })
}

/// Equal-probability bins of the standard normal. Bin `j` is
/// `[q_j, q_{j+1})` with `q_j = Φ⁻¹(j / bins)`; the last bin is closed. The
/// reproduction value of a bin is the normal mean conditioned on it.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGrid {
    /// Interior boundaries `q_1 … q_{bins−1}`.
    pub boundaries: Vec<f64>,
    pub means: Vec<f64>,
}

impl GaussianGrid {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::invalid(format!("need at least 2 bins, got {bins}")));
        }
        let normal = standard_normal();
        // Mirror the lower half so the grid is exactly symmetric and the
        // median boundary, when present, is exactly zero.
        let boundaries: Vec<f64> = (1..bins)
            .map(|j| match (2 * j).cmp(&bins) {
                std::cmp::Ordering::Less => normal.inverse_cdf(j as f64 / bins as f64),
                std::cmp::Ordering::Equal => 0.0,
                std::cmp::Ordering::Greater => -normal.inverse_cdf((bins - j) as f64 / bins as f64),
            })
            .collect();
        let pdf = |x: f64| if x.is_finite() { normal.pdf(x) } else { 0.0 };
        let mass = 1.0 / bins as f64;
        let means = (0..bins)
            .map(|j| {
                let lo = if j == 0 {
                    f64::NEG_INFINITY
                } else {
                    boundaries[j - 1]
                };
                let hi = if j == bins - 1 {
                    f64::INFINITY
                } else {
                    boundaries[j]
                };
                (pdf(lo) - pdf(hi)) / mass
            })
            .collect();
        Ok(Self { boundaries, means })
    }

    pub fn bins(&self) -> usize {
        self.means.len()
    }

    pub fn bin(&self, a: f64) -> usize {
        self.boundaries.partition_point(|&q| q <= a)
    }

    /// Bin indices and reproduction values for each coordinate of `a`.
    pub fn quantize(&self, a: &[f64]) -> Result<ScalarCode> {
        check_finite(a)?;
        let (indices, value) = a
            .iter()
            .map(|&x| {
                let j = self.bin(x);
                (j, self.means[j])
            })
            .unzip();
        Ok(ScalarCode { indices, value })
    }
}

pub fn gaussian_grid_quantize(a: &[f64], bins: usize) -> Result<ScalarCode> {
    GaussianGrid::new(bins)?.quantize(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureBranch {
    Perturbed,
    Quantized,
}

/// Perturb-or-quantize: with probability `mixture_p` applies
/// [`fsp_perturb`], otherwise the centroid value of [`fsp_quantize`]. The
/// coin is tossed per call.
pub fn mixture_forward<R: Rng + ?Sized>(
    z: &[f64],
    cfg: &FspConfig,
    rng: &mut R,
) -> Result<(LatentVector, MixtureBranch)> {
    cfg.validate()?;
    check_unit_cube(z, &cfg.levels)?;
    if rng.random::<f64>() < cfg.mixture_p {
        Ok((fsp_perturb(z, cfg, rng)?, MixtureBranch::Perturbed))
    } else {
        let code = fsp_quantize(z, &cfg.levels)?;
        Ok((
            LatentVector::from_trusted(code.value),
            MixtureBranch::Quantized,
        ))
    }
}

/// Mixed-radix token id; the first dimension is the most significant digit.
pub fn index_pack(indices: &[usize], levels: &[usize]) -> Result<u64> {
    validate_levels(levels)?;
    crate::latent::check_dim(levels.len(), indices.len())?;
    let mut id = 0u64;
    for (dim, (&i, &l)) in indices.iter().zip(levels).enumerate() {
        if i >= l {
            return Err(Error::IndexOutOfRange {
                dim,
                index: i,
                levels: l,
            });
        }
        id = id * l as u64 + i as u64;
    }
    Ok(id)
}

pub fn index_unpack(token: u64, levels: &[usize]) -> Result<Vec<usize>> {
    validate_levels(levels)?;
    let size = codebook_size(levels);
    if token >= size {
        return Err(Error::invalid(format!(
            "token {token} exceeds codebook size {size}"
        )));
    }
    let mut rest = token;
    let mut out = vec![0; levels.len()];
    for (slot, &l) in out.iter_mut().zip(levels).rev() {
        *slot = (rest % l as u64) as usize;
        rest /= l as u64;
    }
    Ok(out)
}
