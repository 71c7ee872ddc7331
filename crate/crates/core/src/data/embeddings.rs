//! Binary embedding file.
//!
//! Layout, all little-endian:
//!
//! | offset | size | field                                          |
//! |--------|------|------------------------------------------------|
//! | 0      | 4    | magic `HYEE`                                   |
//! | 4      | 2    | version (`u16`, currently 1)                   |
//! | 6      | 1    | mode: 0 hyperbolic, 1 euclidean                |
//! | 7      | 1    | flags: bit 0 labels present, bit 1 exit ids    |
//! | 8      | 8    | count (`u64`)                                  |
//! | 16     | 4    | spatial dimension `n` (`u32`)                  |
//! | 20     | 8    | curvature (`f64`, 0 in euclidean mode)         |
//! | 28     | …    | `count × n` `f32` space components, row-major  |
//! |        | …    | `count` `u32` labels, if flagged               |
//! |        | …    | `count` `u32` exit ids, if flagged             |
//!
//! Hyperbolic points store only their space part; the time coordinate is
//! recomputed on load. Values are truncated to `f32` on write.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, FormatError, Result};
use crate::geometry::{Curvature, LorentzPoint};

pub const MAGIC: [u8; 4] = *b"HYEE";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 28;

const FLAG_LABELS: u8 = 1;
const FLAG_EXIT_IDS: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointMode {
    Hyperbolic,
    Euclidean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub mode: PointMode,
    /// Curvature of the hyperboloid; ignored in euclidean mode.
    pub curvature: f64,
    pub dim: usize,
    /// Row-major `count × dim` space components.
    pub values: Vec<f32>,
    pub labels: Option<Vec<u32>>,
    pub exit_ids: Option<Vec<u32>>,
}

impl EmbeddingSet {
    pub fn new(mode: PointMode, curvature: f64, dim: usize, values: Vec<f32>) -> Result<Self> {
        let set = EmbeddingSet {
            mode,
            curvature,
            dim,
            values,
            labels: None,
            exit_ids: None,
        };
        set.validate()?;
        Ok(set)
    }

    /// Builds a hyperbolic set from points, truncating their space parts to `f32`.
    pub fn from_points(points: &[LorentzPoint], c: Curvature) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.dim());
        let mut values = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.dim(),
                });
            }
            values.extend(p.space().iter().map(|&v| v as f32));
        }
        Self::new(PointMode::Hyperbolic, c.get(), dim, values)
    }

    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<Self> {
        let dim = vectors.first().map_or(0, |v| v.len());
        let mut values = Vec::with_capacity(vectors.len() * dim);
        for v in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            values.extend(v.iter().map(|&x| x as f32));
        }
        Self::new(PointMode::Euclidean, 0.0, dim, values)
    }

    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        self.labels = Some(labels);
        self.validate()?;
        Ok(self)
    }

    pub fn with_exit_ids(mut self, exit_ids: Vec<u32>) -> Result<Self> {
        self.exit_ids = Some(exit_ids);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            self.labels.as_ref().or(self.exit_ids.as_ref()).map_or(0, |v| v.len())
        } else {
            self.values.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows widened to `f64`.
    pub fn vectors(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.row(i).iter().map(|&v| v as f64).collect()).collect()
    }

    pub fn curvature(&self) -> Result<Curvature> {
        Curvature::new(self.curvature)
    }

    /// Rows lifted onto the hyperboloid.
    pub fn points(&self) -> Result<Vec<LorentzPoint>> {
        let c = self.curvature()?;
        self.vectors().iter().map(|v| LorentzPoint::lift(v, c)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 && !self.values.is_empty() {
            return Err(Error::invalid("dim", "zero dimension with nonempty values"));
        }
        if self.dim > 0 && self.values.len() % self.dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: self.values.len() % self.dim,
            });
        }
        if self.mode == PointMode::Hyperbolic {
            Curvature::new(self.curvature)?;
        }
        let n = self.len();
        for v in [&self.labels, &self.exit_ids].into_iter().flatten() {
            if v.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.len() * 4 + n * 8);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.mode {
            PointMode::Hyperbolic => 0,
            PointMode::Euclidean => 1,
        });
        let mut flags = 0;
        if self.labels.is_some() {
            flags |= FLAG_LABELS;
        }
        if self.exit_ids.is_some() {
            flags |= FLAG_EXIT_IDS;
        }
        out.push(flags);
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.curvature.to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for block in [&self.labels, &self.exit_ids].into_iter().flatten() {
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let truncated = |needed: usize| FormatError::Truncated {
            needed: needed as u64,
            available: bytes.len() as u64,
        };
        if bytes.len() < 4 || bytes[..4] != MAGIC {
            return Err(FormatError::BadMagic {
                expected: MAGIC,
                found: bytes[..bytes.len().min(4)].to_vec(),
            }
            .into());
        }
        if bytes.len() < HEADER_LEN {
            return Err(truncated(HEADER_LEN).into());
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion {
                found: version.into(),
                supported: VERSION.into(),
            }
            .into());
        }
        let mode = match bytes[6] {
            0 => PointMode::Hyperbolic,
            1 => PointMode::Euclidean,
            m => {
                return Err(FormatError::InvalidHeader {
                    field: "mode",
                    reason: format!("unknown mode {m}"),
                }
                .into())
            }
        };
        let flags = bytes[7];
        if flags & !(FLAG_LABELS | FLAG_EXIT_IDS) != 0 {
            return Err(FormatError::InvalidHeader {
                field: "flags",
                reason: format!("unknown bits in {flags:#04x}"),
            }
            .into());
        }
        let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as u64;
        let curvature = f64::from_le_bytes(bytes[20..28].try_into().unwrap());
        if mode == PointMode::Hyperbolic && !(curvature.is_finite() && curvature > 0.0) {
            return Err(FormatError::InvalidHeader {
                field: "curvature",
                reason: format!("{curvature} is not a positive curvature"),
            }
            .into());
        }
        let blocks = u64::from(flags & FLAG_LABELS != 0) + u64::from(flags & FLAG_EXIT_IDS != 0);
        let payload = count
            .checked_mul(dim)
            .and_then(|v| v.checked_add(count.checked_mul(blocks)?))
            .and_then(|v| v.checked_mul(4))
            .and_then(|v| v.checked_add(HEADER_LEN as u64))
            .ok_or(FormatError::InvalidHeader {
                field: "count",
                reason: "payload size overflows".into(),
            })?;
        if (bytes.len() as u64) < payload {
            return Err(FormatError::Truncated {
                needed: payload,
                available: bytes.len() as u64,
            }
            .into());
        }
        if (bytes.len() as u64) > payload {
            return Err(FormatError::TrailingBytes(bytes.len() as u64 - payload).into());
        }
        let (count, dim) = (count as usize, dim as usize);
        let words = |start: usize, len: usize| bytes[start..start + 4 * len].chunks_exact(4).map(|w| <[u8; 4]>::try_from(w).unwrap());
        let mut at = HEADER_LEN;
        let values: Vec<f32> = words(at, count * dim).map(f32::from_le_bytes).collect();
        at += 4 * count * dim;
        let mut read_block = |present: bool| {
            present.then(|| {
                let v: Vec<u32> = words(at, count).map(u32::from_le_bytes).collect();
                at += 4 * count;
                v
            })
        };
        let labels = read_block(flags & FLAG_LABELS != 0);
        let exit_ids = read_block(flags & FLAG_EXIT_IDS != 0);
        Ok(EmbeddingSet {
            mode,
            curvature,
            dim,
            values,
            labels,
            exit_ids,
        })
    }
}

pub fn write_embeddings(set: &EmbeddingSet, path: &Path) -> Result<()> {
    set.validate()?;
    write_atomic(path, &set.to_bytes())
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    EmbeddingSet::from_bytes(&std::fs::read(path)?)
}
