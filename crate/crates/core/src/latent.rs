//! Latent vectors, the bounded FIFO sample queue, and immutable snapshots of
//! its contents.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Deref;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// Default queue capacity.
pub const DEFAULT_QUEUE_CAPACITY: usize = 65_536;
/// Default fraction of each batch that is pushed into the queue.
pub const DEFAULT_SUBSAMPLE_FRACTION: f64 = 0.05;

/// Magic bytes of a queue dump.
pub const QUEUE_MAGIC: [u8; 4] = *b"VPQ1";

/// A point in the d-dimensional bottleneck space. All coordinates are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_finite(&coords)?;
        if coords.is_empty() {
            return Err(Error::invalid(
                "latent vector must have at least one coordinate",
            ));
        }
        Ok(Self(coords))
    }

    /// Builds a vector the caller guarantees to be finite and non-empty.
    pub(crate) fn from_trusted(coords: Vec<f64>) -> Self {
        debug_assert!(coords.iter().all(|x| x.is_finite()));
        Self(coords)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for LatentVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for LatentVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for LatentVector {
    type Error = Error;

    fn try_from(coords: Vec<f64>) -> Result<Self> {
        Self::new(coords)
    }
}

impl TryFrom<&[f64]> for LatentVector {
    type Error = Error;

    fn try_from(coords: &[f64]) -> Result<Self> {
        Self::new(coords.to_vec())
    }
}

pub(crate) fn check_finite(coords: &[f64]) -> Result<()> {
    match coords.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Squared Euclidean distance. Coordinates are accumulated in index order so
/// every caller gets bit-identical results for the same pair.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diff = x - y;
            diff * diff
        })
        .sum()
}

#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Number of vectors inserted for a batch of `len` at `fraction`: the ceiling
/// of `fraction * len`, guarded against representation error so that e.g.
/// `0.3 * 10` inserts 3 rather than 4.
pub fn subsample_count(len: usize, fraction: f64) -> usize {
    if len == 0 {
        return 0;
    }
    let exact = fraction * len as f64;
    let nearest = exact.round();
    let count = if (exact - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        exact.ceil()
    };
    (count as usize).clamp(1, len)
}

/// Bounded FIFO buffer of latent vectors used for density and radius
/// estimation. Stored as a flat ring buffer; [`SampleQueue::snapshot`] copies
/// the live entries out in FIFO order.
#[derive(Debug, Clone)]
pub struct SampleQueue {
    capacity: usize,
    dim: usize,
    data: Vec<f64>,
    /// Slot of the oldest entry.
    head: usize,
    len: usize,
}

impl SampleQueue {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("queue capacity must be at least 1"));
        }
        if dim == 0 {
            return Err(Error::invalid("queue dimension must be at least 1"));
        }
        Ok(Self {
            capacity,
            dim,
            data: Vec::new(),
            head: 0,
            len: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Appends one vector, evicting the oldest entry when full.
    pub fn push(&mut self, v: &[f64]) -> Result<()> {
        check_dim(self.dim, v.len())?;
        check_finite(v)?;
        self.push_unchecked(v);
        Ok(())
    }

    fn push_unchecked(&mut self, v: &[f64]) {
        if self.len < self.capacity {
            let slot = (self.head + self.len) % self.capacity;
            let start = slot * self.dim;
            if start == self.data.len() {
                self.data.extend_from_slice(v);
            } else {
                self.data[start..start + self.dim].copy_from_slice(v);
            }
            self.len += 1;
        } else {
            let start = self.head * self.dim;
            self.data[start..start + self.dim].copy_from_slice(v);
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Inserts `⌈fraction·|batch|⌉` vectors drawn uniformly without
    /// replacement from `batch`, preserving their batch order. The whole batch
    /// is validated before anything is inserted.
    pub fn push_subsampled<R: Rng + ?Sized>(
        &mut self,
        batch: &[LatentVector],
        fraction: f64,
        rng: &mut R,
    ) -> Result<usize> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "subsample fraction must lie in (0, 1], got {fraction}"
            )));
        }
        for v in batch {
            check_dim(self.dim, v.dim())?;
            check_finite(v)?;
        }
        let count = subsample_count(batch.len(), fraction);
        if count == 0 {
            return Ok(0);
        }
        let mut picked = index::sample(rng, batch.len(), count).into_vec();
        picked.sort_unstable();
        for i in picked {
            self.push_unchecked(&batch[i]);
        }
        Ok(count)
    }

    /// Immutable copy of the current entries, oldest first.
    pub fn snapshot(&self) -> SampleView {
        let mut flat = Vec::with_capacity(self.len * self.dim);
        for i in 0..self.len {
            let start = ((self.head + i) % self.capacity) * self.dim;
            flat.extend_from_slice(&self.data[start..start + self.dim]);
        }
        SampleView {
            dim: self.dim,
            data: flat.into(),
        }
    }

    /// Queue holding the rows of `view` (the newest `capacity` of them).
    pub fn from_view(view: &SampleView, capacity: usize) -> Result<Self> {
        let mut queue = Self::new(capacity, view.dim())?;
        for row in view.rows() {
            queue.push_unchecked(row);
        }
        Ok(queue)
    }
}

/// Read-only, cheaply clonable set of latent vectors in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleView {
    dim: usize,
    data: Arc<[f64]>,
}

impl SampleView {
    /// View over the given vectors; all must share one dimension.
    pub fn from_vectors(dim: usize, vectors: &[LatentVector]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let mut flat = Vec::with_capacity(vectors.len() * dim);
        for v in vectors {
            check_dim(dim, v.dim())?;
            flat.extend_from_slice(v);
        }
        Ok(Self {
            dim,
            data: flat.into(),
        })
    }

    /// View over a row-major buffer of `data.len() / dim` vectors.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "buffer of {} values is not a multiple of dimension {dim}",
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            dim,
            data: data.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_vectors(&self) -> Vec<LatentVector> {
        self.rows()
            .map(|r| LatentVector::from_trusted(r.to_vec()))
            .collect()
    }

    /// Writes the `VPQ1` dump.
    pub fn write_dump<W: Write>(&self, w: W) -> Result<()> {
        write_flat(w, QUEUE_MAGIC, self.dim, self.len() as u64, &self.data)
    }

    pub fn read_dump<R: Read>(r: R) -> Result<Self> {
        let (dim, data) = read_flat(r, QUEUE_MAGIC)?;
        Self::from_flat(dim, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_dump(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_dump(BufReader::new(File::open(path)?))
    }
}

/// Header: 4 magic bytes, dim as u32 LE, count as u64 LE; then count·dim f64 LE.
pub(crate) fn write_flat<W: Write>(
    mut w: W,
    magic: [u8; 4],
    dim: usize,
    count: u64,
    data: &[f64],
) -> Result<()> {
    let dim32 = u32::try_from(dim).map_err(|_| Error::invalid("dimension exceeds u32"))?;
    debug_assert_eq!(data.len() as u64, count * dim as u64);
    w.write_all(&magic)?;
    w.write_all(&dim32.to_le_bytes())?;
    w.write_all(&count.to_le_bytes())?;
    for x in data {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_flat<R: Read>(mut r: R, magic: [u8; 4]) -> Result<(usize, Vec<f64>)> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)
        .map_err(|_| Error::Format("truncated header".into()))?;
    if head[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&head[..4]),
            String::from_utf8_lossy(&magic)
        )));
    }
    let dim = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(head[8..16].try_into().unwrap());
    if dim == 0 {
        return Err(Error::Format("dimension is zero".into()));
    }
    let values = count
        .checked_mul(dim as u64)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != values * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            values * 8,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dim, data))
}
