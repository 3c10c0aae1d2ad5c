//! Codebook valid usage, normalization regularizers, quantization error and
//! histograms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-code selection counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageCounts {
    counts: Vec<u64>,
    total: u64,
}

impl UsageCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("usage counts need at least one code"));
        }
        let total = counts.iter().sum();
        Ok(Self { counts, total })
    }

    /// Tallies `ids` over `k` codes.
    pub fn from_ids<I: IntoIterator<Item = u64>>(ids: I, k: usize) -> Result<Self> {
        let mut counts = vec![0u64; k];
        for id in ids {
            let slot = counts
                .get_mut(id as usize)
                .ok_or_else(|| Error::invalid(format!("code id {id} out of range for K = {k}")))?;
            *slot += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Codebook size K.
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    /// Shannon entropy of the selection frequencies in nats; unused codes
    /// contribute nothing.
    pub fn entropy(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::invalid("usage total is zero"));
        }
        let total = self.total as f64;
        Ok(-self
            .counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / total;
                p * p.ln()
            })
            .sum::<f64>())
    }

    /// `exp(entropy)`: the number of equally used codes with the same entropy.
    pub fn effective_codes(&self) -> Result<f64> {
        Ok(self.entropy()?.exp())
    }
}

/// Codebook valid usage `exp(−Σ p log p) / K`.
pub fn cvu(usage: &UsageCounts) -> Result<f64> {
    Ok(usage.effective_codes()? / usage.k() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n − 1.
    Unbiased,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormLossParams {
    pub lambda_mean: f64,
    pub lambda_var: f64,
    /// Per-dimension variance target: 1 for latents, `σ_g²` for
    /// pre-activations.
    pub target_variance: f64,
    pub variance: VarianceKind,
}

impl NormLossParams {
    pub fn new(lambda_mean: f64, lambda_var: f64, target_variance: f64) -> Result<Self> {
        let p = Self {
            lambda_mean,
            lambda_var,
            target_variance,
            variance: VarianceKind::Population,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let weight_ok = |w: f64| w >= 0.0 && w.is_finite();
        if !weight_ok(self.lambda_mean) || !weight_ok(self.lambda_var) {
            return Err(Error::invalid(
                "regularizer weights must be finite and non-negative",
            ));
        }
        if !(self.target_variance > 0.0 && self.target_variance.is_finite()) {
            return Err(Error::invalid("target variance must be positive"));
        }
        Ok(())
    }
}

/// `λ₁‖μ‖² + λ₂‖σ² − target·1‖²` over the per-dimension batch moments.
pub fn norm_loss<V: AsRef<[f64]>>(batch: &[V], params: &NormLossParams) -> Result<f64> {
    params.validate()?;
    if batch.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            available: batch.len(),
        });
    }
    let dim = batch[0].as_ref().len();
    let n = batch.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in batch {
        let v = v.as_ref();
        crate::latent::check_dim(dim, v.len())?;
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for v in batch {
        for ((s, x), m) in var.iter_mut().zip(v.as_ref()).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let denom = match params.variance {
        VarianceKind::Population => n,
        VarianceKind::Unbiased => n - 1.0,
    };
    let mean_term: f64 = mean.iter().map(|m| m * m).sum();
    let var_term: f64 = var
        .iter()
        .map(|s| {
            let gap = s / denom - params.target_variance;
            gap * gap
        })
        .sum();
    Ok(params.lambda_mean * mean_term + params.lambda_var * var_term)
}

/// Mean squared difference over all elements and dimensions.
pub fn mse<A: AsRef<[f64]>, B: AsRef<[f64]>>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("mse of an empty batch"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.as_ref(), y.as_ref());
        crate::latent::check_dim(x.len(), y.len())?;
        sum += crate::latent::squared_distance(x, y);
        count += x.len();
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Counts divided by the number of in-range values.
    pub frequencies: Vec<f64>,
    pub below: u64,
    pub above: u64,
}

/// Bins `[e_j, e_{j+1})`, last bin closed; values outside the edges (and NaN,
/// counted as above) are tallied separately.
pub fn histogram(values: &[f64], edges: &[f64]) -> Result<Histogram> {
    if edges.len() < 2 {
        return Err(Error::invalid("histogram needs at least two edges"));
    }
    if !edges.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::invalid(
            "histogram edges must be strictly increasing",
        ));
    }
    let bins = edges.len() - 1;
    let last = edges[bins];
    let mut counts = vec![0u64; bins];
    let (mut below, mut above) = (0, 0);
    for &x in values {
        if x < edges[0] {
            below += 1;
        } else if x > last || x.is_nan() {
            above += 1;
        } else if x == last {
            counts[bins - 1] += 1;
        } else {
            counts[edges.partition_point(|&e| e <= x) - 1] += 1;
        }
    }
    let inside: u64 = counts.iter().sum();
    let frequencies = counts
        .iter()
        .map(|&c| {
            if inside == 0 {
                0.0
            } else {
                c as f64 / inside as f64
            }
        })
        .collect();
    Ok(Histogram {
        edges: edges.to_vec(),
        counts,
        frequencies,
        below,
        above,
    })
}

/// Flat JSON report of a quantizer's usage and error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cvu: f64,
    pub mse: f64,
    pub entropy_nats: f64,
    pub effective_codes: f64,
}

impl MetricReport {
    pub fn new(usage: &UsageCounts, mse: f64) -> Result<Self> {
        Ok(Self {
            cvu: cvu(usage)?,
            mse,
            entropy_nats: usage.entropy()?,
            effective_codes: usage.effective_codes()?,
        })
    }
}
