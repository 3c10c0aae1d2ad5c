//! Exact k-nearest-neighbor queries, the kNN density surrogate and the local
//! quantization radius.
//!
//! Neighbors are ordered by Euclidean distance with ties broken by insertion
//! index (earlier wins). The scan is linear; results are identical to a full
//! sort of all distances.

use crate::error::{Error, Result};
use crate::latent::{check_dim, squared_distance, SampleView};

/// Floor applied to neighbor distances before taking logarithms.
pub const DISTANCE_FLOOR: f64 = 1e-12;

pub const DEFAULT_KNN_K: usize = 3;
pub const DEFAULT_ETA: f64 = 1.0;
pub const DEFAULT_CODEBOOK_SIZE: usize = 1024;

/// Above this neighbor order a full select is cheaper than insertion.
const INSERTION_LIMIT: usize = 48;

/// Parameters of the local radius `R(z) = η · D_M(z)` with `M = ⌈|S|/K⌉`,
/// and of the kNN density estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusParams {
    /// Target codebook size K.
    pub codebook_size: usize,
    /// Radius scale η.
    pub eta: f64,
    /// Neighbor order used by the density estimate.
    pub knn_k: usize,
}

impl Default for RadiusParams {
    fn default() -> Self {
        Self {
            codebook_size: DEFAULT_CODEBOOK_SIZE,
            eta: DEFAULT_ETA,
            knn_k: DEFAULT_KNN_K,
        }
    }
}

impl RadiusParams {
    pub fn new(codebook_size: usize, eta: f64, knn_k: usize) -> Result<Self> {
        let p = Self {
            codebook_size,
            eta,
            knn_k,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.codebook_size == 0 {
            return Err(Error::invalid("codebook size K must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if self.knn_k == 0 {
            return Err(Error::invalid("knn_k must be at least 1"));
        }
        Ok(())
    }

    /// `M` for a sample set of `sample_count` vectors.
    pub fn cell_count(&self, sample_count: usize) -> usize {
        cell_count(sample_count, self.codebook_size)
    }

    /// Checks that both neighbor orders are satisfiable on `samples`.
    pub fn check_samples(&self, samples: &SampleView) -> Result<()> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::InsufficientSamples {
                needed: self.knn_k,
                available: 0,
            });
        }
        let needed = self.knn_k.max(self.cell_count(n));
        if needed > n {
            return Err(Error::InsufficientSamples {
                needed,
                available: n,
            });
        }
        Ok(())
    }
}

/// `M = ⌈sample_count / K⌉`.
pub fn cell_count(sample_count: usize, codebook_size: usize) -> usize {
    sample_count.div_ceil(codebook_size.max(1)).max(1)
}

/// A neighbor: insertion index into the sample set and its squared distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub squared_distance: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.squared_distance.sqrt()
    }

    #[inline]
    fn precedes(&self, other: &Neighbor) -> bool {
        self.squared_distance < other.squared_distance
            || (self.squared_distance == other.squared_distance && self.index < other.index)
    }
}

fn validate_query(query: &[f64], samples: &SampleView, m: usize) -> Result<()> {
    check_dim(samples.dim(), query.len())?;
    if samples.is_empty() || m > samples.len() {
        return Err(Error::InsufficientSamples {
            needed: m.max(1),
            available: samples.len(),
        });
    }
    if m == 0 {
        return Err(Error::invalid("neighbor order must be at least 1"));
    }
    Ok(())
}

/// The `m` nearest samples to `query`, nearest first.
pub fn nearest_neighbors(query: &[f64], samples: &SampleView, m: usize) -> Result<Vec<Neighbor>> {
    validate_query(query, samples, m)?;
    if m <= INSERTION_LIMIT {
        Ok(nearest_by_insertion(query, samples, m))
    } else {
        Ok(nearest_by_select(query, samples, m))
    }
}

fn nearest_by_insertion(query: &[f64], samples: &SampleView, m: usize) -> Vec<Neighbor> {
    let mut best: Vec<Neighbor> = Vec::with_capacity(m + 1);
    for (index, row) in samples.rows().enumerate() {
        let sq = squared_distance(query, row);
        // Rows arrive in index order, so an equal distance never displaces an
        // earlier neighbor.
        if best.len() == m && sq >= best[m - 1].squared_distance {
            continue;
        }
        let pos = best.partition_point(|b| b.squared_distance <= sq);
        best.insert(
            pos,
            Neighbor {
                index,
                squared_distance: sq,
            },
        );
        best.truncate(m);
    }
    best
}

fn nearest_by_select(query: &[f64], samples: &SampleView, m: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = samples
        .rows()
        .enumerate()
        .map(|(index, row)| Neighbor {
            index,
            squared_distance: squared_distance(query, row),
        })
        .collect();
    let order = |a: &Neighbor, b: &Neighbor| {
        a.squared_distance
            .total_cmp(&b.squared_distance)
            .then(a.index.cmp(&b.index))
    };
    if m < all.len() {
        all.select_nth_unstable_by(m - 1, order);
        all.truncate(m);
    }
    all.sort_unstable_by(order);
    debug_assert!(all.windows(2).all(|w| w[0].precedes(&w[1])));
    all
}

/// `D_m(query | samples)`: distance to the m-th nearest sample.
pub fn knn_distance(query: &[f64], samples: &SampleView, m: usize) -> Result<f64> {
    let nn = nearest_neighbors(query, samples, m)?;
    Ok(nn[m - 1].distance())
}

/// `D_k` and `D_M` at one point, from a single scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalScale {
    pub d_k: f64,
    pub d_m: f64,
}

pub fn local_scale(
    query: &[f64],
    samples: &SampleView,
    params: &RadiusParams,
) -> Result<LocalScale> {
    params.check_samples(samples)?;
    let m = params.cell_count(samples.len());
    let order = m.max(params.knn_k);
    let nn = nearest_neighbors(query, samples, order)?;
    Ok(LocalScale {
        d_k: nn[params.knn_k - 1].distance(),
        d_m: nn[m - 1].distance(),
    })
}

/// Local quantization radius `R(z) = η · D_M(z | S)`.
pub fn local_radius(query: &[f64], samples: &SampleView, params: &RadiusParams) -> Result<f64> {
    params.validate()?;
    let m = params.cell_count(samples.len());
    Ok(params.eta * knn_distance(query, samples, m)?)
}

/// Unnormalized log density `−d · ln max(D_k, floor)` of the kNN estimator.
pub fn log_density(query: &[f64], samples: &SampleView, knn_k: usize) -> Result<f64> {
    let d_k = knn_distance(query, samples, knn_k)?;
    Ok(log_density_from_distance(d_k, samples.dim()))
}

pub fn log_density_from_distance(d_k: f64, dim: usize) -> f64 {
    -(dim as f64) * d_k.max(DISTANCE_FLOOR).ln()
}
