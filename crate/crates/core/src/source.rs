//! Synthetic latent distributions with closed-form densities, used in place
//! of encoder outputs.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::latent::{check_dim, LatentVector};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceKind {
    /// Uniform on `[low, high]^d`.
    UniformCube {
        #[serde(default)]
        low: f64,
        #[serde(default = "one")]
        high: f64,
    },
    /// Independent normals; empty vectors mean zero mean and unit deviation.
    Gaussian {
        #[serde(default)]
        mean: Vec<f64>,
        #[serde(default)]
        std: Vec<f64>,
    },
    /// Mixture of isotropic normals.
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        scales: Vec<f64>,
    },
    /// Uniform on the spherical shell `inner ≤ ‖x‖ ≤ outer` around the origin.
    Annulus { inner: f64, outer: f64 },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub kind: SourceKind,
}

impl SourceSpec {
    pub fn uniform_cube(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            kind: SourceKind::UniformCube {
                low: 0.0,
                high: 1.0,
            },
        }
    }

    pub fn standard_gaussian(dim: usize, seed: u64) -> Self {
        Self {
            dim,
            seed,
            kind: SourceKind::Gaussian {
                mean: vec![0.0; dim],
                std: vec![1.0; dim],
            },
        }
    }

    pub fn gaussian_mixture(
        dim: usize,
        seed: u64,
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        scales: Vec<f64>,
    ) -> Self {
        Self {
            dim,
            seed,
            kind: SourceKind::GaussianMixture {
                weights,
                means,
                scales,
            },
        }
    }

    pub fn annulus(dim: usize, seed: u64, inner: f64, outer: f64) -> Self {
        Self {
            dim,
            seed,
            kind: SourceKind::Annulus { inner, outer },
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SourceKind::UniformCube { .. } => "uniform_cube",
            SourceKind::Gaussian { .. } => "gaussian",
            SourceKind::GaussianMixture { .. } => "gaussian_mixture",
            SourceKind::Annulus { .. } => "annulus",
        }
    }

    /// Checks parameters and fills defaulted Gaussian moments.
    pub fn validated(mut self) -> Result<Self> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::invalid("source dimension must be at least 1"));
        }
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match &mut self.kind {
            SourceKind::UniformCube { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::invalid(format!(
                        "uniform cube needs low < high, got [{low}, {high}]"
                    )));
                }
            }
            SourceKind::Gaussian { mean, std } => {
                if mean.is_empty() {
                    *mean = vec![0.0; d];
                }
                if std.is_empty() {
                    *std = vec![1.0; d];
                }
                check_dim(d, mean.len())?;
                check_dim(d, std.len())?;
                if !finite(mean) || !std.iter().all(|s| *s > 0.0 && s.is_finite()) {
                    return Err(Error::invalid(
                        "gaussian needs finite means and positive deviations",
                    ));
                }
            }
            SourceKind::GaussianMixture {
                weights,
                means,
                scales,
            } => {
                if weights.is_empty()
                    || weights.len() != means.len()
                    || weights.len() != scales.len()
                {
                    return Err(Error::invalid(
                        "mixture needs equally many weights, means and scales (at least one)",
                    ));
                }
                if !weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
                    return Err(Error::invalid("mixture weights must be positive"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "mixture weights sum to {total}, not 1"
                    )));
                }
                for m in means.iter() {
                    check_dim(d, m.len())?;
                    if !finite(m) {
                        return Err(Error::invalid("mixture means must be finite"));
                    }
                }
                if !scales.iter().all(|s| *s > 0.0 && s.is_finite()) {
                    return Err(Error::invalid("mixture scales must be positive"));
                }
            }
            SourceKind::Annulus { inner, outer } => {
                if !(*inner >= 0.0 && inner < outer && outer.is_finite()) {
                    return Err(Error::invalid(format!(
                        "annulus needs 0 <= inner < outer, got {inner}, {outer}"
                    )));
                }
            }
        }
        Ok(self)
    }

    /// `n` draws from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<LatentVector>> {
        let spec = self.clone().validated()?;
        Ok((0..n)
            .map(|_| LatentVector::from_trusted(spec.draw(rng)))
            .collect())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim;
        match &self.kind {
            SourceKind::UniformCube { low, high } => (0..d)
                .map(|_| low + (high - low) * rng.random::<f64>())
                .collect(),
            SourceKind::Gaussian { mean, std } => mean
                .iter()
                .zip(std)
                .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            SourceKind::GaussianMixture {
                weights,
                means,
                scales,
            } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut c = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        c = i;
                        break;
                    }
                }
                means[c]
                    .iter()
                    .map(|m| m + scales[c] * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            SourceKind::Annulus { inner, outer } => {
                let dir: Vec<f64> = loop {
                    let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if n > 1e-30 {
                        break v.into_iter().map(|x| x / n).collect();
                    }
                };
                let df = d as f64;
                let (a, b) = (inner.powf(df), outer.powf(df));
                let r = (a + rng.random::<f64>() * (b - a))
                    .powf(1.0 / df)
                    .clamp(*inner, *outer);
                dir.into_iter().map(|x| r * x).collect()
            }
        }
    }

    /// Exact probability density at `point`.
    pub fn density(&self, point: &[f64]) -> Result<f64> {
        Ok(self.log_density(point)?.exp())
    }

    /// Natural log of the density; negative infinity off the support.
    pub fn log_density(&self, point: &[f64]) -> Result<f64> {
        check_dim(self.dim, point.len())?;
        let d = self.dim as f64;
        Ok(match &self.kind {
            SourceKind::UniformCube { low, high } => {
                if point.iter().all(|x| (low..=high).contains(&x)) {
                    -d * (high - low).ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            SourceKind::Gaussian { mean, std } => {
                let (mean, std) = gaussian_moments(self.dim, mean, std);
                point
                    .iter()
                    .zip(mean.iter().zip(std.iter()))
                    .map(|(x, (m, s))| normal_log_pdf((x - m) / s) - s.ln())
                    .sum()
            }
            SourceKind::GaussianMixture {
                weights,
                means,
                scales,
            } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(means.iter().zip(scales))
                    .map(|(w, (m, s))| {
                        let sq = crate::latent::squared_distance(point, m) / (s * s);
                        w.ln() - 0.5 * sq - d * (s.ln() + 0.5 * (2.0 * PI).ln())
                    })
                    .collect();
                log_sum_exp(&terms)
            }
            SourceKind::Annulus { inner, outer } => {
                let r = crate::latent::squared_distance(point, &vec![0.0; self.dim]).sqrt();
                if r >= *inner && r <= *outer {
                    let ln_unit_ball = 0.5 * d * PI.ln() - ln_gamma(0.5 * d + 1.0);
                    -(ln_unit_ball + (outer.powf(d) - inner.powf(d)).ln())
                } else {
                    f64::NEG_INFINITY
                }
            }
        })
    }

    /// Axis-aligned box containing (almost) all of the mass: exact for the
    /// bounded kinds, four deviations around each mean otherwise.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        match &self.kind {
            SourceKind::UniformCube { low, high } => (vec![*low; d], vec![*high; d]),
            SourceKind::Gaussian { mean, std } => {
                let (mean, std) = gaussian_moments(d, mean, std);
                (
                    mean.iter().zip(&std).map(|(m, s)| m - 4.0 * s).collect(),
                    mean.iter().zip(&std).map(|(m, s)| m + 4.0 * s).collect(),
                )
            }
            SourceKind::GaussianMixture { means, scales, .. } => {
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for (m, s) in means.iter().zip(scales) {
                    for i in 0..d {
                        lo[i] = lo[i].min(m[i] - 4.0 * s);
                        hi[i] = hi[i].max(m[i] + 4.0 * s);
                    }
                }
                (lo, hi)
            }
            SourceKind::Annulus { outer, .. } => (vec![-outer; d], vec![*outer; d]),
        }
    }
}

fn gaussian_moments(dim: usize, mean: &[f64], std: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mean = if mean.is_empty() {
        vec![0.0; dim]
    } else {
        mean.to_vec()
    };
    let std = if std.is_empty() {
        vec![1.0; dim]
    } else {
        std.to_vec()
    };
    (mean, std)
}

fn normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `n` draws from `spec`, seeded by `spec.seed`.
pub fn sample_source(spec: &SourceSpec, n: usize) -> Result<Vec<LatentVector>> {
    spec.sample(n, &mut seeded(spec.seed))
}

pub fn source_density(spec: &SourceSpec, point: &[f64]) -> Result<f64> {
    spec.density(point)
}
