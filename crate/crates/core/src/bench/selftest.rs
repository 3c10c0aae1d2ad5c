//! Fast invariant checks run by `vpquant selftest`.

use rand::Rng;

use crate::codebook::{kmeans_fit, KMeansParams};
use crate::density::{nearest_neighbors, RadiusParams};
use crate::error::Result;
use crate::latent::{squared_distance, SampleQueue, SampleView};
use crate::metrics::{cvu, UsageCounts};
use crate::perturb::{perturb_batch, PerturbConfig};
use crate::rng::seeded;
use crate::scalar::{fsp_quantize, fsq_quantize, index_pack, index_unpack};
use crate::source::SourceSpec;

use super::figure::figure_fsp_vs_fsq;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

type CheckFn = fn() -> Result<Check>;

const CHECKS: &[(&str, CheckFn)] = &[
    ("queue_fifo", queue_fifo),
    ("knn_brute_force", knn_brute_force),
    ("support_invariant", support_invariant),
    ("cvu_hand_cases", cvu_hand_cases),
    ("scalar_masses", scalar_masses),
    ("index_roundtrip", index_roundtrip),
    ("kmeans_inertia", kmeans_inertia),
];

/// Runs every check; a check that errors counts as a failure.
pub fn run_selftest() -> Vec<Check> {
    CHECKS
        .iter()
        .map(|(name, f)| f().unwrap_or_else(|e| Check::new(name, false, format!("error: {e}"))))
        .collect()
}

fn queue_fifo() -> Result<Check> {
    let mut q = SampleQueue::new(4, 1)?;
    for i in 0..7 {
        q.push(&[i as f64])?;
    }
    let got: Vec<f64> = q.snapshot().rows().map(|r| r[0]).collect();
    Ok(Check::new(
        "queue_fifo",
        got == [3.0, 4.0, 5.0, 6.0],
        format!("{got:?}"),
    ))
}

fn knn_brute_force() -> Result<Check> {
    let mut rng = seeded(11);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=60);
        let data: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let view = SampleView::from_flat(2, data)?;
        let q = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let m = rng.random_range(1..=n);
        let mut oracle: Vec<f64> = view.rows().map(|r| squared_distance(&q, r)).collect();
        oracle.sort_by(f64::total_cmp);
        let got: Vec<f64> = nearest_neighbors(&q, &view, m)?
            .iter()
            .map(|nb| nb.squared_distance)
            .collect();
        if got != oracle[..m] {
            mismatches += 1;
        }
    }
    Ok(Check::new(
        "knn_brute_force",
        mismatches == 0,
        format!("{mismatches} mismatches in 100"),
    ))
}

fn support_invariant() -> Result<Check> {
    let source = SourceSpec::gaussian_mixture(
        2,
        3,
        vec![0.5, 0.5],
        vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
        vec![1.0, 0.5],
    );
    let samples = SampleView::from_vectors(2, &source.sample(2000, &mut seeded(1))?)?;
    let cfg = PerturbConfig::new(RadiusParams::new(64, 1.0, 3)?, 2)?;
    let batch = source.sample(2000, &mut seeded(2))?;
    let outcomes = perturb_batch(&batch, &samples, &cfg, 5)?;
    let violations = batch
        .iter()
        .zip(&outcomes)
        .filter(|(z, o)| o.accepted && squared_distance(z, &o.result).sqrt() > o.proposal_radius)
        .count();
    let accepted = outcomes.iter().filter(|o| o.accepted).count();
    Ok(Check::new(
        "support_invariant",
        violations == 0 && accepted > 0,
        format!(
            "{violations} violations, {accepted} accepted of {}",
            batch.len()
        ),
    ))
}

fn cvu_hand_cases() -> Result<Check> {
    let uniform = cvu(&UsageCounts::new(vec![5; 8])?)?;
    let single = cvu(&UsageCounts::new(vec![0, 9, 0, 0])?)?;
    let skewed = cvu(&UsageCounts::new(vec![3, 1])?)?;
    let ok = (uniform - 1.0).abs() < 1e-12
        && (single - 0.25).abs() < 1e-12
        && (skewed - 0.8774).abs() < 1e-4;
    Ok(Check::new(
        "cvu_hand_cases",
        ok,
        format!("uniform {uniform:.6}, single {single:.6}, [3,1] {skewed:.6}"),
    ))
}

fn scalar_masses() -> Result<Check> {
    let rows = figure_fsp_vs_fsq(4, 200_000, 7)?;
    let expected = [
        1.0 / 6.0,
        1.0 / 3.0,
        1.0 / 3.0,
        1.0 / 6.0,
        0.25,
        0.25,
        0.25,
        0.25,
    ];
    let worst = rows
        .iter()
        .zip(expected)
        .map(|(r, m)| (r.probability_mass - m).abs())
        .fold(0.0, f64::max);
    Ok(Check::new(
        "scalar_masses",
        worst < 0.005,
        format!("max mass error {worst:.5}"),
    ))
}

fn index_roundtrip() -> Result<Check> {
    let levels = [8, 6, 5];
    let mut bad = 0;
    for token in 0..240u64 {
        if index_pack(&index_unpack(token, &levels)?, &levels)? != token {
            bad += 1;
        }
    }
    let z = [0.3, 0.99, 0.0];
    let fsp = fsp_quantize(&z, &levels)?;
    let fsq = fsq_quantize(&z, &levels)?;
    let idempotent =
        fsp_quantize(&fsp.value, &levels)? == fsp && fsq_quantize(&fsq.value, &levels)? == fsq;
    Ok(Check::new(
        "index_roundtrip",
        bad == 0 && idempotent,
        format!("{bad} bad tokens of 240, idempotent {idempotent}"),
    ))
}

fn kmeans_inertia() -> Result<Check> {
    let data = SourceSpec::uniform_cube(2, 4).sample(2000, &mut seeded(4))?;
    let view = SampleView::from_vectors(2, &data)?;
    let (codebook, report) = kmeans_fit(&view, &KMeansParams::new(16, 9))?;
    let monotone = report
        .inertia_trace
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    Ok(Check::new(
        "kmeans_inertia",
        monotone && codebook.len() == 16,
        format!(
            "{} iterations, final inertia {:.4}",
            report.iterations, report.final_inertia
        ),
    ))
}
