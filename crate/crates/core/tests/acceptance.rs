//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//!     cargo test --release --test acceptance

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;
use vpquant::density::{local_radius, log_density, nearest_neighbors};
use vpquant::latent::{squared_distance, LatentVector, SampleView};
use vpquant::metrics::{cvu, UsageCounts};
use vpquant::perturb::{accept_reject, perturb_batch, PerturbConfig};
use vpquant::rng::{seeded, substream};
use vpquant::scalar::{fsp_quantize, fsq_quantize};
use vpquant::{bench, Codebook, RadiusParams, SourceSpec};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

type Criterion = fn() -> vpquant::Result<Outcome>;

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("mh_stationarity", mh_stationarity),
        ("support_invariant", support_invariant),
        ("acceptance_ratio", acceptance_ratio),
        ("lloyd_max_optimality", lloyd_max_optimality),
        ("figure_reproduction", figure_reproduction),
        ("cvu_metric", cvu_metric),
        ("codebook_pipeline", codebook_pipeline),
        ("knn_density_fidelity", knn_density_fidelity),
        ("determinism", determinism),
        ("brute_force_equivalence", brute_force_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        if !result.passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<24} {} ({:.1}s) {}",
            i + 1,
            name,
            if result.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            result.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn two_mode_mixture(seed: u64) -> SourceSpec {
    SourceSpec::gaussian_mixture(
        2,
        seed,
        vec![0.6, 0.4],
        vec![vec![-2.0, 0.0], vec![2.5, 1.5]],
        vec![1.0, 0.6],
    )
}

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut worst) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    worst
}

fn mh_stationarity() -> vpquant::Result<Outcome> {
    let source = two_mode_mixture(1);
    let samples = SampleView::from_vectors(2, &source.sample(10_000, &mut substream(1, 0))?)?;
    let inputs = source.sample(100_000, &mut substream(1, 1))?;
    let cfg = PerturbConfig::new(RadiusParams::new(1024, 1.0, 3)?, 2)?;
    let outputs = perturb_batch(&inputs, &samples, &cfg, 11)?;
    let ks: Vec<f64> = (0..2)
        .map(|d| {
            ks_statistic(
                inputs.iter().map(|z| z[d]).collect(),
                outputs.iter().map(|o| o.result[d]).collect(),
            )
        })
        .collect();
    let moved = outputs.iter().filter(|o| o.accepted).count() as f64 / inputs.len() as f64;
    Ok(outcome(
        ks.iter().all(|&k| k < 0.02),
        format!(
            "KS per dim {:.4}, {:.4} (limit 0.02); accepted {moved:.3}",
            ks[0], ks[1]
        ),
    ))
}

fn support_invariant() -> vpquant::Result<Outcome> {
    let sources = [
        SourceSpec::uniform_cube(3, 2),
        SourceSpec::standard_gaussian(2, 3),
        two_mode_mixture(4),
        SourceSpec::annulus(2, 5, 1.0, 2.0),
    ];
    let params = RadiusParams::new(32, 1.0, 3)?;
    let (mut calls, mut accepted, mut violations) = (0u64, 0u64, 0u64);
    for (i, source) in sources.iter().enumerate() {
        let samples = SampleView::from_vectors(
            source.dim,
            &source.sample(512, &mut substream(20, i as u64))?,
        )?;
        let cfg = PerturbConfig::new(params, source.dim)?;
        let batch = source.sample(250_000, &mut substream(21, i as u64))?;
        let outcomes = perturb_batch(&batch, &samples, &cfg, 22 + i as u64)?;
        for (z, o) in batch.iter().zip(&outcomes) {
            calls += 1;
            if o.accepted {
                accepted += 1;
                let bound = local_radius(&o.result, &samples, &params)?;
                if squared_distance(z, &o.result).sqrt() > bound {
                    violations += 1;
                }
            }
        }
    }
    Ok(outcome(
        violations == 0 && calls >= 1_000_000,
        format!("{violations} violations in {accepted} accepted of {calls} calls"),
    ))
}

fn acceptance_ratio() -> vpquant::Result<Outcome> {
    // With samples at the corners of a 100-square, K = |S| (one-sample cells)
    // and k = 1, a point (a, 0) near the origin has D_k = D_M = a. Moving from
    // (a, 0) to (0, b) therefore has acceptance min(1, ((a/b)^2)^2).
    let samples = SampleView::from_flat(2, vec![0.0, 0.0, 100.0, 0.0, 0.0, 100.0, 100.0, 100.0])?;
    let cfg = PerturbConfig::new(RadiusParams::new(4, 10.0, 1)?, 2)?;
    let trials = 100_000;
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, ratio) in [0.2f64, 0.4, 0.6, 0.8, 1.0, 1.5].into_iter().enumerate() {
        let z = [ratio.sqrt(), 0.0];
        let proposal = LatentVector::new(vec![0.0, 1.0])?;
        let mut rng = substream(30, i as u64);
        let mut hits = 0u64;
        for _ in 0..trials {
            if accept_reject(&z, proposal.clone(), &samples, &cfg, &mut rng)?.accepted {
                hits += 1;
            }
        }
        let expected = ratio.powi(2).min(1.0);
        let freq = hits as f64 / trials as f64;
        let se = (expected * (1.0 - expected) / trials as f64).sqrt();
        let pass = if se == 0.0 {
            freq == expected
        } else {
            (freq - expected).abs() <= 3.0 * se
        };
        ok &= pass;
        lines.push(format!("r={ratio}: {freq:.4} vs {expected:.4}"));
    }
    Ok(outcome(ok, lines.join("; ")))
}

fn lloyd_max_optimality() -> vpquant::Result<Outcome> {
    let mut rng = seeded(40);
    let draws: Vec<f64> = (0..1_000_000).map(|_| rng.random()).collect();
    let mut ok = true;
    let mut lines = Vec::new();
    for l in [2usize, 3, 4, 5, 8] {
        let (mut fsp, mut fsq) = (0.0, 0.0);
        for &z in &draws {
            fsp += (fsp_quantize(&[z], &[l])?.value[0] - z).powi(2);
            fsq += (fsq_quantize(&[z], &[l])?.value[0] - z).powi(2);
        }
        let n = draws.len() as f64;
        let (fsp, fsq) = (fsp / n, fsq / n);
        let lf = l as f64;
        let fsp_rel = fsp / (1.0 / (12.0 * lf * lf)) - 1.0;
        let fsq_rel = fsq / (1.0 / (12.0 * (lf - 1.0).powi(2))) - 1.0;
        ok &= fsp_rel.abs() <= 0.02 && fsq_rel.abs() <= 0.02 && fsp < fsq;
        lines.push(format!(
            "L={l}: fsp {:+.2}% fsq {:+.2}%",
            100.0 * fsp_rel,
            100.0 * fsq_rel
        ));
    }
    Ok(outcome(ok, lines.join("; ")))
}

fn cvu_of_masses(masses: &[f64], n: usize) -> vpquant::Result<f64> {
    let counts = masses
        .iter()
        .map(|m| (m * n as f64).round() as u64)
        .collect();
    cvu(&UsageCounts::new(counts)?)
}

fn figure_reproduction() -> vpquant::Result<Outcome> {
    let n = 1_000_000;
    let rows = bench::figure_fsp_vs_fsq(4, n, 50)?;
    let mass = |scheme: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.scheme == scheme)
            .map(|r| r.probability_mass)
            .collect()
    };
    let (fsp, fsq) = (mass("fsp"), mass("fsq"));
    let fsq_expected = [1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0];
    let masses_ok = fsp.iter().all(|m| (m - 0.25).abs() <= 0.005)
        && fsq
            .iter()
            .zip(fsq_expected)
            .all(|(m, e)| (m - e).abs() <= 0.005);
    let (fsp_cvu, fsq_cvu) = (cvu_of_masses(&fsp, n)?, cvu_of_masses(&fsq, n)?);
    Ok(outcome(
        masses_ok && fsp_cvu >= 0.999 && (fsq_cvu - 0.945).abs() <= 0.003,
        format!("fsp masses {fsp:.4?} cvu {fsp_cvu:.4}; fsq masses {fsq:.4?} cvu {fsq_cvu:.4}"),
    ))
}

fn cvu_metric() -> vpquant::Result<Outcome> {
    let uniform = cvu(&UsageCounts::new(vec![17; 32])?)?;
    let single = cvu(&UsageCounts::new(vec![0, 0, 0, 40, 0, 0, 0, 0])?)?;
    let skewed = cvu(&UsageCounts::new(vec![3, 1])?)?;
    Ok(outcome(
        (uniform - 1.0).abs() < 1e-12
            && (single - 1.0 / 8.0).abs() < 1e-12
            && (skewed - 0.8774).abs() <= 1e-4,
        format!("uniform {uniform:.6}, single of 8 {single:.6}, [3,1] {skewed:.6}"),
    ))
}

const PIPELINE_CONFIG: &str = r#"
mode = "vp"
seed = 70

[source]
kind = "uniform_cube"
dim = 3
seed = 71

[vp]
codebook_size = 256
eta = 1.0
knn_k = 3
queue_capacity = 65536
queue_fill = 65536
fit_samples = 100000
eval_samples = 100000
"#;

fn codebook_pipeline() -> vpquant::Result<Outcome> {
    let cfg = bench::ExperimentConfig::from_toml(PIPELINE_CONFIG)?;
    let report = bench::run(&cfg)?.report;
    let radius = report.median_radius.unwrap_or(f64::NAN);
    let error = report.median_quantization_error.unwrap_or(f64::NAN);
    Ok(outcome(
        report.cvu > 0.9 && error <= radius && report.support_violations == Some(0),
        format!(
            "cvu {:.4} (> 0.9); median quantization error {error:.4} <= median radius {radius:.4}",
            report.cvu
        ),
    ))
}

/// Spearman rank correlation with average ranks for ties; NaN when either
/// side is constant.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
                j += 1;
            }
            for &k in &order[i..=j] {
                r[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn knn_density_fidelity() -> vpquant::Result<Outcome> {
    // Queries are uniform over the source's bounding box grown by a quarter
    // of its width on each side, so every source is probed both where its
    // density varies and, for the bounded kinds, off the support.
    let sources = [
        SourceSpec::uniform_cube(2, 80),
        SourceSpec::standard_gaussian(3, 81),
        two_mode_mixture(82),
        SourceSpec::annulus(2, 83, 1.0, 2.0),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    for (i, source) in sources.iter().enumerate() {
        let samples = SampleView::from_vectors(
            source.dim,
            &source.sample(10_000, &mut substream(84, i as u64))?,
        )?;
        let (lo, hi) = source.bounding_box();
        let mut rng = substream(85, i as u64);
        let (mut truth, mut estimate) = (Vec::new(), Vec::new());
        for _ in 0..1000 {
            let q: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| {
                    let pad = 0.25 * (b - a);
                    rng.random_range(a - pad..b + pad)
                })
                .collect();
            truth.push(source.log_density(&q)?);
            estimate.push(log_density(&q, &samples, 3)?);
        }
        let rho = spearman(&truth, &estimate);
        ok &= rho > 0.9;
        lines.push(format!("{} d={} rho {rho:.4}", source.name(), source.dim));
    }
    Ok(outcome(ok, format!("{} (limit 0.9)", lines.join("; "))))
}

fn run_cli(args: &[&str], dir: &Path) -> vpquant::Result<()> {
    let status = Command::new(env!("CARGO_BIN_EXE_vpquant"))
        .args(args)
        .current_dir(dir)
        .status()?;
    if status.success() {
        Ok(())
    } else {
        Err(vpquant::Error::Format(format!(
            "vpquant {args:?} exited with {status}"
        )))
    }
}

fn snapshot(dir: &Path) -> vpquant::Result<Vec<(String, Vec<u8>)>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            for (name, bytes) in snapshot(&path)? {
                files.push((
                    format!("{}/{name}", path.file_name().unwrap().to_string_lossy()),
                    bytes,
                ));
            }
        } else {
            files.push((
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&path)?,
            ));
        }
    }
    files.sort();
    Ok(files)
}

const CLI_CONFIGS: [(&str, &str); 3] = [
    (
        "vp.toml",
        "mode = \"vp\"\nseed = 3\n[source]\nkind = \"annulus\"\ndim = 2\ninner = 1.0\nouter = 2.0\n\
         [vp]\ncodebook_size = 32\nqueue_capacity = 2048\nfit_samples = 4000\neval_samples = 2000\n",
    ),
    (
        "fsp.toml",
        "mode = \"fsp\"\nseed = 4\n[source]\nkind = \"gaussian\"\ndim = 3\n[scalar]\ncodebook_size = 256\n\
         eval_samples = 20000\n",
    ),
    (
        "grid.toml",
        "mode = \"gaussian_grid\"\nseed = 5\n[source]\nkind = \"gaussian\"\ndim = 2\n[scalar]\nbins = 4\n\
         eval_samples = 20000\n",
    ),
];

fn cli_session(dir: &Path) -> vpquant::Result<Vec<(String, Vec<u8>)>> {
    for (name, text) in CLI_CONFIGS {
        std::fs::write(dir.join(name), text)?;
    }
    run_cli(&["run", "--config", "vp.toml", "--out", "out/vp"], dir)?;
    run_cli(&["run", "--config", "fsp.toml", "--out", "out/fsp"], dir)?;
    run_cli(&["run", "--config", "grid.toml", "--out", "out/grid"], dir)?;
    run_cli(
        &[
            "figure",
            "--levels",
            "4",
            "--samples",
            "100000",
            "--seed",
            "7",
            "--out",
            "out/fig.csv",
        ],
        dir,
    )?;
    run_cli(
        &[
            "sample",
            "--config",
            "vp.toml",
            "--n",
            "3000",
            "--out",
            "out/s.vpq",
        ],
        dir,
    )?;
    run_cli(
        &[
            "codebook",
            "--input",
            "out/s.vpq",
            "--k",
            "16",
            "--seed",
            "9",
            "--out",
            "out/cb.vpc",
        ],
        dir,
    )?;
    run_cli(
        &[
            "quantize",
            "--codebook",
            "out/cb.vpc",
            "--input",
            "out/s.vpq",
            "--out",
            "out/q.json",
            "--indices",
            "out/idx.csv",
        ],
        dir,
    )?;
    snapshot(&dir.join("out"))
}

fn determinism() -> vpquant::Result<Outcome> {
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    let first = cli_session(a.path())?;
    let second = cli_session(b.path())?;
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    Ok(outcome(
        first.len() == second.len() && differing.is_empty() && !first.is_empty(),
        format!("{} files compared, differing: {differing:?}", first.len()),
    ))
}

fn brute_force_equivalence() -> vpquant::Result<Outcome> {
    let mut rng = seeded(100);
    let (mut knn_bad, mut assign_bad) = (0, 0);
    for _ in 0..1000 {
        let dim = rng.random_range(1..=4);
        let n = rng.random_range(1..=200);
        // Small integer grids force exact distance ties.
        let coord = |rng: &mut vpquant::rng::StreamRng| rng.random_range(-3..=3) as f64;
        let data: Vec<f64> = (0..n * dim).map(|_| coord(&mut rng)).collect();
        let samples = SampleView::from_flat(dim, data)?;
        let q: Vec<f64> = (0..dim).map(|_| coord(&mut rng)).collect();
        let m = rng.random_range(1..=n);

        let mut oracle: Vec<(f64, usize)> = samples
            .rows()
            .enumerate()
            .map(|(i, r)| (squared_distance(&q, r), i))
            .collect();
        oracle.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let got: Vec<(f64, usize)> = nearest_neighbors(&q, &samples, m)?
            .iter()
            .map(|nb| (nb.squared_distance, nb.index))
            .collect();
        if got != oracle[..m] {
            knn_bad += 1;
        }

        let k = rng.random_range(1..=16);
        let codes: Vec<f64> = (0..k * dim).map(|_| coord(&mut rng)).collect();
        let codebook = Codebook::from_flat(dim, codes)?;
        let mut best = 0;
        for j in 1..k {
            if squared_distance(&q, codebook.code(j)) < squared_distance(&q, codebook.code(best)) {
                best = j;
            }
        }
        if codebook.quantize(&q)?.index != best {
            assign_bad += 1;
        }
    }
    Ok(outcome(
        knn_bad == 0 && assign_bad == 0,
        format!("1000 instances: {knn_bad} kNN mismatches, {assign_bad} assignment mismatches"),
    ))
}
