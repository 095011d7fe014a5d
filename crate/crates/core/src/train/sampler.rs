//! Epoch batching over a dense-and-sparse and a sparse-only dataset.
//!
//! Each dataset is shuffled and cut into batches on its own, so a batch
//! never mixes sources. The combined batch list is then shuffled, which
//! interleaves the sources in proportion to their batch counts.

use crate::rng::Stream;
use crate::simdata::DatasetTag;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub tag: DatasetTag,
    /// Indices into the dataset named by `tag`.
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedSampler {
    pub dense_len: usize,
    pub sparse_len: usize,
    pub batch_size: usize,
}

impl MixedSampler {
    pub fn new(dense_len: usize, sparse_len: usize, batch_size: usize) -> Self {
        Self {
            dense_len,
            sparse_len,
            batch_size: batch_size.max(1),
        }
    }

    /// Fraction of batches drawn from the dense-and-sparse dataset.
    pub fn mix_ratio(&self) -> f64 {
        let (d, s) = (self.dense_len.div_ceil(self.batch_size), self.sparse_len.div_ceil(self.batch_size));
        if d + s == 0 {
            0.0
        } else {
            d as f64 / (d + s) as f64
        }
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.dense_len.div_ceil(self.batch_size) + self.sparse_len.div_ceil(self.batch_size)
    }

    /// The batches of one epoch; a short final batch per dataset is kept.
    pub fn epoch(&self, rng: &mut Stream) -> Vec<Batch> {
        let mut batches = Vec::with_capacity(self.batches_per_epoch());
        for (tag, len) in [(DatasetTag::DenseAndSparse, self.dense_len), (DatasetTag::SparseOnly, self.sparse_len)] {
            let mut idx: Vec<usize> = (0..len).collect();
            rng.shuffle(&mut idx);
            batches.extend(idx.chunks(self.batch_size).map(|c| Batch {
                tag,
                indices: c.to_vec(),
            }));
        }
        rng.shuffle(&mut batches);
        batches
    }
}
