//! Offline codebook generation and inference-time quantization.
//!
//! Centroids are seeded with K-Means++ (D² sampling) and refined with Lloyd
//! iterations. Quantization assigns each vector to its nearest code, lowest
//! index first on ties.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use log::debug;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{
    check_dim, check_finite, read_flat, squared_distance, write_flat, LatentVector, SampleView,
};
use crate::rng::seeded;

pub const CODEBOOK_MAGIC: [u8; 4] = *b"VPC1";

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    dim: usize,
    /// Row-major `K × dim` centroids.
    codes: Vec<f64>,
}

impl Codebook {
    pub fn from_flat(dim: usize, codes: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("codebook dimension must be at least 1"));
        }
        if codes.is_empty() {
            return Err(Error::EmptyCodebook);
        }
        if !codes.len().is_multiple_of(dim) {
            return Err(Error::invalid(
                "codebook buffer is not a multiple of its dimension",
            ));
        }
        check_finite(&codes)?;
        Ok(Self { dim, codes })
    }

    pub fn from_vectors(codes: &[LatentVector]) -> Result<Self> {
        let first = codes.first().ok_or(Error::EmptyCodebook)?;
        let view = SampleView::from_vectors(first.dim(), codes)?;
        Self::from_flat(view.dim(), view.as_flat().to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of codes K.
    pub fn len(&self) -> usize {
        self.codes.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code(&self, j: usize) -> &[f64] {
        &self.codes[j * self.dim..(j + 1) * self.dim]
    }

    pub fn codes(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.codes.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.codes
    }

    /// Index and squared distance of the nearest code.
    #[inline]
    fn nearest(&self, z: &[f64]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (j, c) in self.codes().enumerate() {
            let d = squared_distance(z, c);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }

    /// Nearest code to `z`; ties go to the lowest index.
    pub fn quantize(&self, z: &[f64]) -> Result<Quantized> {
        check_dim(self.dim, z.len())?;
        let (index, sq) = self.nearest(z);
        Ok(Quantized {
            index,
            code: LatentVector::from_trusted(self.code(index).to_vec()),
            error: sq.sqrt(),
        })
    }

    /// Code indices of every vector in `batch` and per-code usage counts.
    pub fn quantize_batch<V: AsRef<[f64]>>(&self, batch: &[V]) -> Result<(Vec<usize>, Vec<u64>)> {
        let mut counts = vec![0u64; self.len()];
        let mut indices = Vec::with_capacity(batch.len());
        for z in batch {
            let z = z.as_ref();
            check_dim(self.dim, z.len())?;
            let (j, _) = self.nearest(z);
            counts[j] += 1;
            indices.push(j);
        }
        Ok((indices, counts))
    }

    pub fn write_dump<W: Write>(&self, w: W) -> Result<()> {
        write_flat(w, CODEBOOK_MAGIC, self.dim, self.len() as u64, &self.codes)
    }

    pub fn read_dump<R: Read>(r: R) -> Result<Self> {
        let (dim, codes) = read_flat(r, CODEBOOK_MAGIC)?;
        Self::from_flat(dim, codes)
    }

    /// Writes the binary codebook to `path` and, when given, the JSON sidecar
    /// next to it (see [`sidecar_path`]).
    pub fn save(&self, path: impl AsRef<Path>, meta: Option<&CodebookMeta>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path)?);
        self.write_dump(&mut w)?;
        w.flush()?;
        if let Some(meta) = meta {
            let mut json = serde_json::to_string_pretty(meta)?;
            json.push('\n');
            std::fs::write(sidecar_path(path), json)?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_dump(BufReader::new(File::open(path)?))
    }
}

/// `cb.vpc` → `cb.vpc.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// JSON sidecar of a saved codebook.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookMeta {
    #[serde(rename = "K")]
    pub k: usize,
    pub dim: usize,
    pub seed: u64,
    pub iterations: usize,
    pub inertia: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub index: usize,
    pub code: LatentVector,
    /// Euclidean distance to the chosen code.
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Convergence threshold on the largest centroid shift.
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansReport {
    /// Lloyd iterations performed.
    pub iterations: usize,
    pub final_inertia: f64,
    pub converged: bool,
    /// Inertia after each assignment step; non-increasing.
    pub inertia_trace: Vec<f64>,
}

/// Fits K centroids to `samples`.
pub fn kmeans_fit(samples: &SampleView, params: &KMeansParams) -> Result<(Codebook, KMeansReport)> {
    let n = samples.len();
    let k = params.k;
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if n < k {
        return Err(Error::InsufficientSamples {
            needed: k,
            available: n,
        });
    }
    if params.tol.is_nan() || params.tol < 0.0 {
        return Err(Error::invalid("tolerance must be non-negative"));
    }
    check_finite(samples.as_flat())?;

    let dim = samples.dim();
    let mut rng = seeded(params.seed);
    let mut centroids = plus_plus_seeds(samples, k, &mut rng)?;
    let mut assignment = vec![0usize; n];
    let mut sq_dist = vec![0.0f64; n];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let mut inertia = assign(samples, &centroids, dim, &mut assignment, &mut sq_dist);
    trace.push(inertia);

    while iterations < params.max_iter {
        iterations += 1;
        let shift = update(samples, &mut centroids, dim, &assignment, &sq_dist);
        inertia = assign(samples, &centroids, dim, &mut assignment, &mut sq_dist);
        trace.push(inertia);
        debug!("lloyd iteration {iterations}: inertia {inertia:.6e}, shift {shift:.3e}");
        if shift < params.tol {
            converged = true;
            break;
        }
    }

    if separate_duplicates(samples, &mut centroids, dim, &sq_dist) {
        inertia = assign(samples, &centroids, dim, &mut assignment, &mut sq_dist);
        trace.push(inertia);
    }

    let codebook = Codebook::from_flat(dim, centroids)?;
    Ok((
        codebook,
        KMeansReport {
            iterations,
            final_inertia: inertia,
            converged,
            inertia_trace: trace,
        },
    ))
}

/// K-Means++ seeding: first centre uniform, then each next centre drawn with
/// probability proportional to its squared distance to the nearest centre.
fn plus_plus_seeds<R: Rng + ?Sized>(
    samples: &SampleView,
    k: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = samples.len();
    let dim = samples.dim();
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(samples.row(first));
    let mut nearest: Vec<f64> = samples
        .rows()
        .map(|r| squared_distance(r, samples.row(first)))
        .collect();

    for chosen in 1..k {
        let total: f64 = nearest.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::invalid(format!(
                "only {chosen} distinct samples available for K = {k}"
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in nearest.iter().enumerate() {
            if w > 0.0 {
                pick = Some(i);
                acc += w;
                if acc > target {
                    break;
                }
            }
        }
        let pick = pick.expect("positive total weight");
        let row = samples.row(pick).to_vec();
        for (i, r) in samples.rows().enumerate() {
            let d = squared_distance(r, &row);
            if d < nearest[i] {
                nearest[i] = d;
            }
        }
        centroids.extend_from_slice(&row);
    }
    Ok(centroids)
}

fn assign(
    samples: &SampleView,
    centroids: &[f64],
    dim: usize,
    assignment: &mut [usize],
    sq_dist: &mut [f64],
) -> f64 {
    let mut inertia = 0.0;
    for (i, row) in samples.rows().enumerate() {
        let mut best = (0, f64::INFINITY);
        for (j, c) in centroids.chunks_exact(dim).enumerate() {
            let d = squared_distance(row, c);
            if d < best.1 {
                best = (j, d);
            }
        }
        assignment[i] = best.0;
        sq_dist[i] = best.1;
        inertia += best.1;
    }
    inertia
}

/// Moves each centroid to the mean of its points and returns the largest
/// shift. An empty cluster takes over the point farthest from its centroid.
fn update(
    samples: &SampleView,
    centroids: &mut [f64],
    dim: usize,
    assignment: &[usize],
    sq_dist: &[f64],
) -> f64 {
    let k = centroids.len() / dim;
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (row, &j) in samples.rows().zip(assignment) {
        counts[j] += 1;
        for (s, x) in sums[j * dim..(j + 1) * dim].iter_mut().zip(row) {
            *s += x;
        }
    }

    let mut shift: f64 = 0.0;
    let mut taken: Vec<usize> = Vec::new();
    for j in 0..k {
        let new: Vec<f64> = if counts[j] > 0 {
            sums[j * dim..(j + 1) * dim]
                .iter()
                .map(|s| s / counts[j] as f64)
                .collect()
        } else {
            let far = sq_dist
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken.contains(i))
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .expect("n >= k leaves a candidate");
            taken.push(far);
            debug!("reseeding empty cluster {j} from sample {far}");
            // Assignment step will move the far point to this centroid; the
            // shift is reported as infinite so the loop does not stop here.
            shift = f64::INFINITY;
            samples.row(far).to_vec()
        };
        let slot = &mut centroids[j * dim..(j + 1) * dim];
        shift = shift.max(squared_distance(slot, &new).sqrt());
        slot.copy_from_slice(&new);
    }
    shift
}

/// Replaces every code identical to an earlier one with the sample farthest
/// from its centroid that is not already a code. The twin stays, so no
/// sample moves farther away.
fn separate_duplicates(
    samples: &SampleView,
    centroids: &mut [f64],
    dim: usize,
    sq_dist: &[f64],
) -> bool {
    let k = centroids.len() / dim;
    let mut changed = false;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| sq_dist[b].total_cmp(&sq_dist[a]).then(a.cmp(&b)));
    let mut candidates = order.into_iter();
    for j in 1..k {
        let duplicate =
            (0..j).any(|i| centroids[i * dim..(i + 1) * dim] == centroids[j * dim..(j + 1) * dim]);
        if !duplicate {
            continue;
        }
        let fresh = candidates.by_ref().find(|&i| {
            let row = samples.row(i);
            centroids.chunks_exact(dim).all(|c| c != row)
        });
        if let Some(i) = fresh {
            centroids[j * dim..(j + 1) * dim].copy_from_slice(samples.row(i));
            changed = true;
        }
    }
    changed
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand_distr::StandardNormal;

    use super::*;

    fn view(dim: usize, data: Vec<f64>) -> SampleView {
        SampleView::from_flat(dim, data).unwrap()
    }

    #[test]
    fn k_equals_n_is_exact() {
        let s = view(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 5.0, 3.0, 3.0]);
        let (cb, rep) = kmeans_fit(&s, &KMeansParams::new(4, 1)).unwrap();
        assert_eq!(cb.len(), 4);
        assert_eq!(rep.final_inertia, 0.0);
        for row in s.rows() {
            assert_eq!(cb.quantize(row).unwrap().error, 0.0);
        }
    }

    #[test]
    fn single_centroid_is_mean() {
        let s = view(2, vec![0.0, 1.0, 2.0, 3.0, 4.0, -1.0]);
        let (cb, rep) = kmeans_fit(&s, &KMeansParams::new(1, 3)).unwrap();
        assert_abs_diff_eq!(cb.code(0)[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cb.code(0)[1], 1.0, epsilon = 1e-12);
        assert!(rep.converged);
    }

    #[test]
    fn fit_errors() {
        let s = view(1, vec![0.0, 1.0]);
        assert!(matches!(
            kmeans_fit(&s, &KMeansParams::new(3, 0)),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(kmeans_fit(&s, &KMeansParams::new(0, 0)).is_err());
        let dup = view(1, vec![1.0, 1.0, 1.0]);
        assert!(kmeans_fit(&dup, &KMeansParams::new(2, 0)).is_err());
    }

    #[test]
    fn inertia_never_increases() {
        let mut rng = seeded(9);
        let data: Vec<f64> = (0..3000)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let s = view(3, data);
        let (_, rep) = kmeans_fit(&s, &KMeansParams::new(20, 4)).unwrap();
        assert!(rep
            .inertia_trace
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert_eq!(rep.final_inertia, *rep.inertia_trace.last().unwrap());
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // Centroids placed so that centroid 1 captures nothing.
        let s = view(1, vec![0.0, 0.1, 0.2, 10.0]);
        let mut centroids = vec![0.1, 100.0];
        let mut assignment = vec![0; 4];
        let mut sq = vec![0.0; 4];
        let before = assign(&s, &centroids, 1, &mut assignment, &mut sq);
        update(&s, &mut centroids, 1, &assignment, &sq);
        assert_eq!(centroids[1], 10.0);
        let after = assign(&s, &centroids, 1, &mut assignment, &mut sq);
        assert!(after < before);
    }

    #[test]
    fn duplicate_codes_are_separated() {
        let s = view(1, vec![0.0, 1.0, 5.0, 9.0]);
        let mut centroids = vec![1.0, 1.0, 5.0];
        let sq = vec![1.0, 0.0, 0.0, 16.0];
        assert!(separate_duplicates(&s, &mut centroids, 1, &sq));
        assert_eq!(centroids, vec![1.0, 9.0, 5.0]);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let mut rng = seeded(10);
        let data: Vec<f64> = (0..2000).map(|_| rng.random::<f64>()).collect();
        let s = view(2, data);
        let a = kmeans_fit(&s, &KMeansParams::new(16, 77)).unwrap();
        let b = kmeans_fit(&s, &KMeansParams::new(16, 77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn quantize_rules() {
        let cb = Codebook::from_flat(1, vec![0.0, 1.0]).unwrap();
        assert_eq!(cb.quantize(&[0.4]).unwrap().index, 0);
        assert_eq!(cb.quantize(&[0.5]).unwrap().index, 0);
        assert_eq!(cb.quantize(&[0.6]).unwrap().index, 1);
        let q = cb.quantize(&[1.0]).unwrap();
        assert_eq!((q.index, q.code.as_slice(), q.error), (1, &[1.0][..], 0.0));
        assert!(cb.quantize(&[0.0, 0.0]).is_err());
        assert!(matches!(
            Codebook::from_flat(1, vec![]),
            Err(Error::EmptyCodebook)
        ));
    }

    #[test]
    fn batch_counts() {
        let cb = Codebook::from_flat(1, vec![0.0, 1.0, 2.0]).unwrap();
        let empty: Vec<Vec<f64>> = vec![];
        let (idx, counts) = cb.quantize_batch(&empty).unwrap();
        assert!(idx.is_empty());
        assert_eq!(counts, vec![0, 0, 0]);
        let (_, counts) = cb.quantize_batch(&[vec![1.9]]).unwrap();
        assert_eq!(counts, vec![0, 0, 1]);
        let batch: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 20.0]).collect();
        let (idx, counts) = cb.quantize_batch(&batch).unwrap();
        let mut manual = vec![0u64; 3];
        for (z, j) in batch.iter().zip(&idx) {
            let q = cb.quantize(z).unwrap().index;
            assert_eq!(q, *j);
            manual[q] += 1;
        }
        assert_eq!(counts, manual);
        assert_eq!(counts.iter().sum::<u64>(), 50);
    }

    #[test]
    fn dump_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cb.vpc");
        let cb = Codebook::from_flat(2, vec![0.5, 1.5, -3.0, 4.0]).unwrap();
        let meta = CodebookMeta {
            k: 2,
            dim: 2,
            seed: 7,
            iterations: 3,
            inertia: 0.25,
        };
        cb.save(&path, Some(&meta)).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"VPC1");
        assert_eq!(&bytes[8..16], &2u64.to_le_bytes());
        assert_eq!(Codebook::load(&path).unwrap(), cb);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(json["K"], 2);
        assert_eq!(json["inertia"], 0.25);
        // A queue dump is not a codebook.
        let mut q = Vec::new();
        SampleView::from_flat(1, vec![1.0])
            .unwrap()
            .write_dump(&mut q)
            .unwrap();
        assert!(Codebook::read_dump(&q[..]).is_err());
    }
}
