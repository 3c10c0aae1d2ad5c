//! Output distributions of the FSQ and FSP quantizers on a uniform source.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scalar::{fsp_quantize, fsq_quantize};

#[derive(Debug, Clone, PartialEq)]
pub struct FigureRow {
    pub scheme: &'static str,
    pub reproduction_value: f64,
    pub probability_mass: f64,
}

/// Quantizes `n` uniform draws on `[0, 1]` with both schemes at `levels`
/// and reports the empirical mass at each reproduction value, FSQ first.
pub fn figure_fsp_vs_fsq(levels: usize, n: usize, seed: u64) -> Result<Vec<FigureRow>> {
    if levels < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 levels, got {levels}"
        )));
    }
    if n == 0 {
        return Err(Error::invalid("need at least one sample"));
    }
    let mut rng = seeded(seed);
    let mut fsq = vec![0u64; levels];
    let mut fsp = vec![0u64; levels];
    let lv = [levels];
    for _ in 0..n {
        let z = [rng.random::<f64>()];
        fsq[fsq_quantize(&z, &lv)?.indices[0]] += 1;
        fsp[fsp_quantize(&z, &lv)?.indices[0]] += 1;
    }
    let steps = (levels - 1) as f64;
    let mut rows = Vec::with_capacity(2 * levels);
    for (j, &c) in fsq.iter().enumerate() {
        rows.push(FigureRow {
            scheme: "fsq",
            reproduction_value: j as f64 / steps,
            probability_mass: c as f64 / n as f64,
        });
    }
    for (j, &c) in fsp.iter().enumerate() {
        rows.push(FigureRow {
            scheme: "fsp",
            reproduction_value: (j as f64 + 0.5) / levels as f64,
            probability_mass: c as f64 / n as f64,
        });
    }
    Ok(rows)
}

/// CSV with a header row, `,` separators and LF line endings.
pub fn figure_csv(rows: &[FigureRow]) -> String {
    let mut csv = String::from("scheme,reproduction_value,probability_mass\n");
    for r in rows {
        writeln!(
            csv,
            "{},{},{}",
            r.scheme, r.reproduction_value, r.probability_mass
        )
        .unwrap();
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_levels() {
        let rows = figure_fsp_vs_fsq(4, 200_000, 7).unwrap();
        assert_eq!(rows.len(), 8);
        let fsp: Vec<_> = rows.iter().filter(|r| r.scheme == "fsp").collect();
        let fsq: Vec<_> = rows.iter().filter(|r| r.scheme == "fsq").collect();
        let values: Vec<f64> = fsp.iter().map(|r| r.reproduction_value).collect();
        assert_eq!(values, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(fsq[0].reproduction_value, 0.0);
        assert_eq!(fsq[3].reproduction_value, 1.0);
        for r in &fsp {
            assert!((r.probability_mass - 0.25).abs() < 0.005);
        }
        for (r, m) in fsq.iter().zip([1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0]) {
            assert!((r.probability_mass - m).abs() < 0.005);
        }
        for scheme in [&fsp, &fsq] {
            let total: f64 = scheme.iter().map(|r| r.probability_mass).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_shape() {
        let csv = figure_csv(&figure_fsp_vs_fsq(3, 10, 1).unwrap());
        assert!(csv.starts_with("scheme,reproduction_value,probability_mass\n"));
        assert_eq!(csv.lines().count(), 7);
        assert!(!csv.contains('\r'));
        assert!(figure_fsp_vs_fsq(1, 10, 1).is_err());
        assert!(figure_fsp_vs_fsq(4, 0, 1).is_err());
    }
}
