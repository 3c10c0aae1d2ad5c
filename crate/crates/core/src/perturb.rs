//! Density-adaptive vector perturbation with a Metropolis–Hastings
//! accept/reject step.
//!
//! A proposal is drawn uniformly from the ball of radius `R(z) = η·D_M(z)`
//! around `z`. It is discarded when `z` lies outside the reverse proposal
//! ball (`‖z − z'‖ > R(z')`), and otherwise accepted with probability
//! `min(1, (D_k(z)·D_M(z) / (D_k(z')·D_M(z')))^d)`. One step is taken per
//! call; the four distances come from the same snapshot.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::density::{local_scale, LocalScale, RadiusParams, DISTANCE_FLOOR};
use crate::error::{Error, Result};
use crate::latent::{check_dim, check_finite, distance, LatentVector, SampleView};
use crate::rng::substream;

const MIN_DIRECTION_NORM: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbConfig {
    pub radius: RadiusParams,
    pub dim: usize,
}

impl PerturbConfig {
    pub fn new(radius: RadiusParams, dim: usize) -> Result<Self> {
        radius.validate()?;
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(Self { radius, dim })
    }

    pub fn eta(&self) -> f64 {
        self.radius.eta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbOutcome {
    /// The perturbed vector: the proposal when accepted, the input otherwise.
    pub result: LatentVector,
    pub accepted: bool,
    pub proposal: LatentVector,
    /// `ln α`; negative infinity when the support check failed.
    pub log_alpha: f64,
    pub rejected_by_support: bool,
    /// `R(z)` at the input.
    pub radius: f64,
    /// `R(z')` at the proposal.
    pub proposal_radius: f64,
}

/// Uniform draw from the closed ball of `radius` around `center`: a Gaussian
/// direction scaled to length `radius · ρ^{1/d}`, `ρ ~ U[0, 1)`.
pub fn sample_ball<R: Rng + ?Sized>(
    center: &[f64],
    radius: f64,
    rng: &mut R,
) -> Result<LatentVector> {
    check_finite(center)?;
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!(
            "ball radius must be finite and >= 0, got {radius}"
        )));
    }
    if radius == 0.0 {
        return LatentVector::new(center.to_vec());
    }
    let d = center.len();
    let mut dir = vec![0.0; d];
    loop {
        let norm = loop {
            for x in dir.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n >= MIN_DIRECTION_NORM {
                break n;
            }
        };
        let rho: f64 = rng.random();
        let scale = radius * rho.powf(1.0 / d as f64) / norm;
        let out: Vec<f64> = center
            .iter()
            .zip(&dir)
            .map(|(c, v)| c + scale * v)
            .collect();
        // Rounding in `c + u` can overshoot the radius by an ulp.
        if distance(center, &out) <= radius {
            return Ok(LatentVector::from_trusted(out));
        }
    }
}

fn log_ratio_from_scales(dim: usize, at_z: LocalScale, at_prop: LocalScale) -> f64 {
    let ln = |x: f64| x.max(DISTANCE_FLOOR).ln();
    dim as f64 * (ln(at_z.d_k) + ln(at_z.d_m) - ln(at_prop.d_k) - ln(at_prop.d_m))
}

fn check_inputs(z: &[f64], samples: &SampleView, cfg: &PerturbConfig) -> Result<()> {
    check_dim(cfg.dim, z.len())?;
    check_dim(cfg.dim, samples.dim())?;
    check_finite(z)?;
    cfg.radius.check_samples(samples)
}

/// Log acceptance ratio of moving from `z` to `z_prop`, and whether the
/// support condition `‖z − z_prop‖ ≤ η·D_M(z_prop)` holds.
pub fn acceptance_log_ratio(
    z: &[f64],
    z_prop: &[f64],
    samples: &SampleView,
    cfg: &PerturbConfig,
) -> Result<(f64, bool)> {
    check_inputs(z, samples, cfg)?;
    check_inputs(z_prop, samples, cfg)?;
    let at_z = local_scale(z, samples, &cfg.radius)?;
    let at_prop = local_scale(z_prop, samples, &cfg.radius)?;
    let support_ok = distance(z, z_prop) <= cfg.eta() * at_prop.d_m;
    Ok((log_ratio_from_scales(cfg.dim, at_z, at_prop), support_ok))
}

/// Applies the support check and accept/reject draw to a given proposal.
/// [`perturb`] is `sample_ball` followed by this.
pub fn accept_reject<R: Rng + ?Sized>(
    z: &[f64],
    proposal: LatentVector,
    samples: &SampleView,
    cfg: &PerturbConfig,
    rng: &mut R,
) -> Result<PerturbOutcome> {
    check_inputs(z, samples, cfg)?;
    let at_z = local_scale(z, samples, &cfg.radius)?;
    decide(z, at_z, proposal, samples, cfg, rng)
}

fn decide<R: Rng + ?Sized>(
    z: &[f64],
    at_z: LocalScale,
    proposal: LatentVector,
    samples: &SampleView,
    cfg: &PerturbConfig,
    rng: &mut R,
) -> Result<PerturbOutcome> {
    check_dim(cfg.dim, proposal.dim())?;
    let radius = cfg.eta() * at_z.d_m;
    let keep =
        |proposal: LatentVector, log_alpha, rejected_by_support, proposal_radius| PerturbOutcome {
            result: LatentVector::from_trusted(z.to_vec()),
            accepted: false,
            proposal,
            log_alpha,
            rejected_by_support,
            radius,
            proposal_radius,
        };

    if proposal.as_slice() == z {
        return Ok(PerturbOutcome {
            result: proposal.clone(),
            accepted: true,
            proposal,
            log_alpha: 0.0,
            rejected_by_support: false,
            radius,
            proposal_radius: radius,
        });
    }

    let at_prop = local_scale(&proposal, samples, &cfg.radius)?;
    let proposal_radius = cfg.eta() * at_prop.d_m;
    if distance(z, &proposal) > proposal_radius {
        return Ok(keep(proposal, f64::NEG_INFINITY, true, proposal_radius));
    }

    let log_ratio = log_ratio_from_scales(cfg.dim, at_z, at_prop);
    let log_alpha = log_ratio.min(0.0);
    let accepted = log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp();
    if accepted {
        Ok(PerturbOutcome {
            result: proposal.clone(),
            accepted: true,
            proposal,
            log_alpha,
            rejected_by_support: false,
            radius,
            proposal_radius,
        })
    } else {
        Ok(keep(proposal, log_alpha, false, proposal_radius))
    }
}

/// One Metropolis–Hastings perturbation step of `z` against `samples`.
pub fn perturb<R: Rng + ?Sized>(
    z: &[f64],
    samples: &SampleView,
    cfg: &PerturbConfig,
    rng: &mut R,
) -> Result<PerturbOutcome> {
    check_inputs(z, samples, cfg)?;
    let at_z = local_scale(z, samples, &cfg.radius)?;
    let proposal = sample_ball(z, cfg.eta() * at_z.d_m, rng)?;
    decide(z, at_z, proposal, samples, cfg, rng)
}

/// Perturbs every element of `batch`; element `i` uses substream `i` of `seed`.
pub fn perturb_batch(
    batch: &[LatentVector],
    samples: &SampleView,
    cfg: &PerturbConfig,
    seed: u64,
) -> Result<Vec<PerturbOutcome>> {
    batch
        .iter()
        .enumerate()
        .map(|(i, z)| perturb(z, samples, cfg, &mut substream(seed, i as u64)))
        .collect()
}

/// Like [`perturb_batch`], but each element names its own substream, so the
/// outcome of an element does not depend on its position.
pub fn perturb_keyed(
    batch: &[(u64, LatentVector)],
    samples: &SampleView,
    cfg: &PerturbConfig,
    seed: u64,
) -> Result<Vec<PerturbOutcome>> {
    batch
        .iter()
        .map(|(key, z)| perturb(z, samples, cfg, &mut substream(seed, *key)))
        .collect()
}
