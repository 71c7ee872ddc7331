//! Datasets, synthetic generation and on-disk formats.

pub mod checkpoint;
pub mod csv_features;
pub mod embeddings;
pub mod synthetic;

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use csv_features::{load_csv_features, write_csv_features, CsvSchema, DecimalSeparator};
pub use embeddings::{read_embeddings, write_embeddings, EmbeddingSet, PointMode};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};

/// Labeled feature vectors with dense 0-based labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub input_dim: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(input_dim: usize, features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if let Some(bad) = features.iter().find(|f| f.len() != input_dim) {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                got: bad.len(),
            });
        }
        Ok(Dataset {
            input_dim,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `max(label) + 1`, or 0 for an empty set.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            input_dim: self.input_dim,
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Seeded shuffle, then split off the first `fraction` of samples.
    pub fn split(&self, fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((self.len() as f64) * fraction).round() as usize;
        let cut = cut.min(self.len());
        (self.subset(&idx[..cut]), self.subset(&idx[cut..]))
    }
}

/// Writes via a temporary file in the destination directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_deterministic_and_partitions() {
        let ds = Dataset::new(1, (0..10).map(|i| vec![i as f64]).collect(), (0..10).map(|i| i % 3).collect()).unwrap();
        let (a, b) = ds.split(0.3, 7);
        let (a2, _) = ds.split(0.3, 7);
        assert_eq!(a, a2);
        assert_eq!(a.len(), 3);
        assert_eq!(b.len(), 7);
        let mut all: Vec<f64> = a.features.iter().chain(&b.features).map(|f| f[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(Dataset::new(2, vec![vec![1.0, 2.0]], vec![]).is_err());
        assert!(Dataset::new(2, vec![vec![1.0]], vec![0]).is_err());
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
