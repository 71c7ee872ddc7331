//! Gromov δ-hyperbolicity of a finite metric space.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, PointMode};
use crate::error::{Error, Result};
use crate::geometry::{self, Curvature, LorentzPoint};

/// Empirical constant linking relative hyperbolicity to curvature.
pub const CURVATURE_FIT_CONSTANT: f64 = 0.144;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    /// Geodesic distance between rows lifted onto the hyperboloid of curvature `c`.
    Lorentz(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub points: usize,
    pub delta: f64,
    pub diameter: f64,
    /// `2δ / diameter`.
    pub delta_rel: f64,
    /// Absent when `delta_rel` is 0.
    pub c_estimate: Option<f64>,
}

/// Pairwise distance matrix of `points` under `metric`.
pub fn distance_matrix(points: &[Vec<f64>], metric: Metric) -> Result<Vec<Vec<f64>>> {
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: p.len(),
        });
    }
    let mut d = vec![vec![0.0; n]; n];
    match metric {
        Metric::Euclidean => {
            for i in 0..n {
                for j in 0..i {
                    let v = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    d[i][j] = v;
                    d[j][i] = v;
                }
            }
        }
        Metric::Lorentz(c) => {
            let c = Curvature::new(c)?;
            let lifted = points.iter().map(|p| LorentzPoint::lift(p, c)).collect::<Result<Vec<_>>>()?;
            for i in 0..n {
                for j in 0..i {
                    let v = geometry::geodesic_distance(&lifted[i], &lifted[j], c)?;
                    d[i][j] = v;
                    d[j][i] = v;
                }
            }
        }
    }
    Ok(d)
}

fn check_matrix(d: &[Vec<f64>]) -> Result<()> {
    let n = d.len();
    if n < 4 {
        return Err(Error::invalid("points", format!("need at least 4 points, got {n}")));
    }
    for row in d {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite("distance matrix"));
        }
    }
    Ok(())
}

/// δ with base point 0, from the max-min product of the Gromov product matrix.
///
/// Cubic in the number of points. With a different base point the value can
/// change by at most a factor of 2.
pub fn delta_from_distances(d: &[Vec<f64>]) -> Result<HyperbolicityReport> {
    check_matrix(d)?;
    let n = d.len();
    let diameter = d.iter().flatten().copied().fold(0.0, f64::max);
    if diameter <= 0.0 {
        return Err(Error::Degenerate("diameter is 0"));
    }
    let g: Vec<Vec<f64>> = (0..n)
        .map(|x| (0..n).map(|y| 0.5 * (d[x][0] + d[y][0] - d[x][y])).collect())
        .collect();
    let mut delta: f64 = 0.0;
    for x in 0..n {
        for y in 0..n {
            let mut maxmin = f64::NEG_INFINITY;
            for z in 0..n {
                maxmin = maxmin.max(g[x][z].min(g[z][y]));
            }
            delta = delta.max(maxmin - g[x][y]);
        }
    }
    let delta_rel = 2.0 * delta / diameter;
    Ok(HyperbolicityReport {
        points: n,
        delta,
        diameter,
        delta_rel,
        c_estimate: curvature_estimate(delta_rel).ok(),
    })
}

pub fn delta_hyperbolicity(points: &[Vec<f64>], metric: Metric) -> Result<HyperbolicityReport> {
    if points.len() < 4 {
        return Err(Error::invalid("points", format!("need at least 4 points, got {}", points.len())));
    }
    delta_from_distances(&distance_matrix(points, metric)?)
}

/// Mean report over `trials` random subsets of `size` points.
pub fn delta_subsampled(points: &[Vec<f64>], metric: Metric, size: usize, trials: usize, seed: u64) -> Result<HyperbolicityReport> {
    if trials == 0 {
        return Err(Error::invalid("trials", "must be positive"));
    }
    let size = size.min(points.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = [0.0; 3];
    for _ in 0..trials {
        let mut idx = sample(&mut rng, points.len(), size).into_vec();
        idx.sort_unstable();
        let subset: Vec<Vec<f64>> = idx.iter().map(|&i| points[i].clone()).collect();
        let r = delta_hyperbolicity(&subset, metric)?;
        acc[0] += r.delta;
        acc[1] += r.diameter;
        acc[2] += r.delta_rel;
    }
    let t = trials as f64;
    let delta_rel = acc[2] / t;
    Ok(HyperbolicityReport {
        points: size,
        delta: acc[0] / t,
        diameter: acc[1] / t,
        delta_rel,
        c_estimate: curvature_estimate(delta_rel).ok(),
    })
}

/// Subsampled δ between the embeddings of two exits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerDelta {
    pub x: u32,
    pub y: u32,
    pub report: HyperbolicityReport,
}

/// δ within each exit (`x == y`) and over the union of each pair of exits.
///
/// Every cell averages `trials` subsets of `size` points; a pair draws half
/// from each exit. Distances follow the set's own geometry.
pub fn layer_delta_table(set: &EmbeddingSet, size: usize, trials: usize, seed: u64) -> Result<Vec<LayerDelta>> {
    let ids = set.exit_ids.as_ref().ok_or(Error::invalid("embeddings", "exit ids are required"))?;
    if trials == 0 || size < 4 {
        return Err(Error::invalid("size", "need at least 4 points and 1 trial"));
    }
    let metric = match set.mode {
        PointMode::Hyperbolic => Metric::Lorentz(set.curvature),
        PointMode::Euclidean => Metric::Euclidean,
    };
    let vectors = set.vectors();
    let mut exits = ids.clone();
    exits.sort_unstable();
    exits.dedup();
    let rows_of = |e: u32| -> Vec<usize> { (0..ids.len()).filter(|&i| ids[i] == e).collect() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (a, &x) in exits.iter().enumerate() {
        for &y in &exits[a..] {
            let (rx, ry) = (rows_of(x), rows_of(y));
            let mut acc = [0.0; 3];
            for _ in 0..trials {
                let mut pick = |rows: &[usize], n: usize| -> Vec<Vec<f64>> {
                    let n = n.min(rows.len());
                    sample(&mut rng, rows.len(), n).into_iter().map(|i| vectors[rows[i]].clone()).collect()
                };
                let points = if x == y {
                    pick(&rx, size)
                } else {
                    let mut p = pick(&rx, size / 2);
                    p.extend(pick(&ry, size - size / 2));
                    p
                };
                let r = delta_hyperbolicity(&points, metric)?;
                acc[0] += r.delta;
                acc[1] += r.diameter;
                acc[2] += r.delta_rel;
            }
            let t = trials as f64;
            let size = if x == y { size.min(rx.len()) } else { (size / 2).min(rx.len()) + (size - size / 2).min(ry.len()) };
            out.push(LayerDelta {
                x,
                y,
                report: HyperbolicityReport {
                    points: size,
                    delta: acc[0] / t,
                    diameter: acc[1] / t,
                    delta_rel: acc[2] / t,
                    c_estimate: curvature_estimate(acc[2] / t).ok(),
                },
            });
        }
    }
    Ok(out)
}

/// `c = (0.144 / δ_rel)²`.
pub fn curvature_estimate(delta_rel: f64) -> Result<f64> {
    if !(delta_rel > 0.0 && delta_rel.is_finite()) {
        return Err(Error::invalid("delta_rel", format!("must be positive, got {delta_rel}")));
    }
    Ok((CURVATURE_FIT_CONSTANT / delta_rel).powi(2))
}
