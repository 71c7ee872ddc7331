//! Per-exit distribution of embedding norms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormHistogram {
    /// `bins + 1` edges shared by every exit; the last bin is closed.
    pub edges: Vec<f64>,
    pub exits: Vec<u32>,
    /// `counts[e][b]` for exit `exits[e]`.
    pub counts: Vec<Vec<usize>>,
    pub means: Vec<f64>,
}

/// Histogram of row norms grouped by exit id (all rows are exit 0 when ids are absent).
pub fn norm_histogram(set: &EmbeddingSet, bins: usize) -> Result<NormHistogram> {
    if bins == 0 {
        return Err(Error::invalid("bins", "must be at least 1"));
    }
    if set.is_empty() {
        return Err(Error::Empty("embedding set"));
    }
    let norms: Vec<f64> = (0..set.len())
        .map(|i| set.row(i).iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt())
        .collect();
    let ids: Vec<u32> = set.exit_ids.clone().unwrap_or_else(|| vec![0; set.len()]);
    let mut exits = ids.clone();
    exits.sort_unstable();
    exits.dedup();

    let lo = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|b| if b == bins { hi } else { lo + width * b as f64 }).collect();

    let mut counts = vec![vec![0usize; bins]; exits.len()];
    let mut sums = vec![0.0; exits.len()];
    for (n, id) in norms.iter().zip(&ids) {
        let e = exits.binary_search(id).expect("collected above");
        let b = (((n - lo) / width) as usize).min(bins - 1);
        counts[e][b] += 1;
        sums[e] += n;
    }
    let means = sums.iter().zip(&counts).map(|(s, c)| s / c.iter().sum::<usize>() as f64).collect();
    Ok(NormHistogram {
        edges,
        exits,
        counts,
        means,
    })
}

impl NormHistogram {
    /// Columns `exit,bin,lower,upper,count`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("exit,bin,lower,upper,count\n");
        for (e, row) in self.exits.iter().zip(&self.counts) {
            for (b, c) in row.iter().enumerate() {
                let _ = writeln!(s, "{e},{b},{},{},{c}", self.edges[b], self.edges[b + 1]);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_fills_one_bin() {
        let set = EmbeddingSet::from_vectors(&[vec![3.0, 4.0]]).unwrap();
        let h = norm_histogram(&set, 7).unwrap();
        assert_eq!(h.counts[0].iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.means, vec![5.0]);
        assert!(norm_histogram(&set, 0).is_err());
    }

    #[test]
    fn counts_conserved_per_exit() {
        let vecs: Vec<Vec<f64>> = (0..90).map(|i| vec![i as f64 * 0.1, 1.0]).collect();
        let ids: Vec<u32> = (0..90).map(|i| (i % 3) as u32).collect();
        let set = EmbeddingSet::from_vectors(&vecs).unwrap().with_exit_ids(ids).unwrap();
        let h = norm_histogram(&set, 10).unwrap();
        assert_eq!(h.exits, vec![0, 1, 2]);
        for row in &h.counts {
            assert_eq!(row.iter().sum::<usize>(), 30);
        }
        let csv = h.to_csv();
        let mut reader = csv::Reader::from_reader(csv.as_bytes());
        let total: usize = reader.records().map(|r| r.unwrap()[4].parse::<usize>().unwrap()).sum();
        assert_eq!(total, 90);
    }
}
