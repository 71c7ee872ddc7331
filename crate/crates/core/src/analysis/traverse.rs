//! Interpolation from an embedding toward the root, with nearest references.

use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, PointMode};
use crate::error::{Error, Result};
use crate::geometry::{self, LorentzPoint, TangentVector};

pub const DEFAULT_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraversalStep {
    pub step: usize,
    /// Space part (hyperbolic) or unit vector (euclidean).
    pub point: Vec<f64>,
    pub nearest: usize,
    pub nearest_label: Option<u32>,
    pub nearest_exit: Option<u32>,
    /// Lorentzian inner product (hyperbolic) or cosine (euclidean); larger is closer.
    pub similarity: f64,
}

fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Degenerate("cannot normalize a zero vector"));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Normalized centroid of the reference vectors.
pub fn euclidean_root(refs: &EmbeddingSet) -> Result<Vec<f64>> {
    if refs.is_empty() {
        return Err(Error::Empty("references"));
    }
    let mut s = vec![0.0; refs.dim];
    for v in refs.vectors() {
        let u = unit(&v)?;
        s.iter_mut().zip(u).for_each(|(a, b)| *a += b);
    }
    unit(&s)
}

/// Path of `steps` points from `start` to `root`.
///
/// Hyperbolic sets interpolate linearly between tangent images at the origin
/// (default root: the origin); euclidean sets interpolate unit vectors and
/// renormalize (default root: the normalized reference centroid). Endpoints
/// are returned exactly.
pub fn traverse(start: &[f64], root: Option<&[f64]>, steps: usize, refs: &EmbeddingSet) -> Result<Vec<TraversalStep>> {
    if steps < 2 {
        return Err(Error::invalid("steps", format!("must be at least 2, got {steps}")));
    }
    if refs.is_empty() {
        return Err(Error::Empty("references"));
    }
    if start.len() != refs.dim || root.is_some_and(|r| r.len() != refs.dim) {
        return Err(Error::DimensionMismatch {
            expected: refs.dim,
            got: start.len(),
        });
    }
    let path: Vec<Vec<f64>> = match refs.mode {
        PointMode::Hyperbolic => {
            let c = refs.curvature()?;
            let root = root.map_or_else(|| vec![0.0; refs.dim], <[f64]>::to_vec);
            let u0 = geometry::log_map_origin(&LorentzPoint::lift(start, c)?, c)?.into_space();
            let u1 = geometry::log_map_origin(&LorentzPoint::lift(&root, c)?, c)?.into_space();
            let mut path = vec![start.to_vec()];
            for i in 1..steps - 1 {
                let t = i as f64 / (steps - 1) as f64;
                let u: Vec<f64> = u0.iter().zip(&u1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
                path.push(geometry::exp_map_origin(&TangentVector::at_origin(u), c)?.space().to_vec());
            }
            path.push(root);
            path
        }
        PointMode::Euclidean => {
            let a = unit(start)?;
            let b = match root {
                Some(r) => unit(r)?,
                None => euclidean_root(refs)?,
            };
            let mut path = vec![a.clone()];
            for i in 1..steps - 1 {
                let t = i as f64 / (steps - 1) as f64;
                let v: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (1.0 - t) * x + t * y).collect();
                path.push(unit(&v)?);
            }
            path.push(b);
            path
        }
    };
    let refs_f64 = refs.vectors();
    let ref_points = match refs.mode {
        PointMode::Hyperbolic => Some(refs.points()?),
        PointMode::Euclidean => None,
    };
    path.into_iter()
        .enumerate()
        .map(|(step, point)| {
            let scores: Vec<f64> = match &ref_points {
                Some(pts) => {
                    let p = LorentzPoint::lift(&point, refs.curvature()?)?;
                    pts.iter().map(|r| p.inner(r)).collect()
                }
                None => refs_f64
                    .iter()
                    .map(|r| {
                        let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                        point.iter().zip(r).map(|(a, b)| a * b).sum::<f64>() / n
                    })
                    .collect(),
            };
            let (nearest, similarity) = scores
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s > best.1 { (i, s) } else { best });
            Ok(TraversalStep {
                step,
                point,
                nearest,
                nearest_label: refs.labels.as_ref().map(|l| l[nearest]),
                nearest_exit: refs.exit_ids.as_ref().map(|l| l[nearest]),
                similarity,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Curvature;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn refs(seed: u64) -> EmbeddingSet {
        let c = Curvature::new(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<LorentzPoint> = (0..40)
            .map(|_| LorentzPoint::lift(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)], c).unwrap())
            .collect();
        EmbeddingSet::from_points(&pts, c).unwrap().with_labels((0..40).map(|i| i % 4).collect()).unwrap()
    }

    #[test]
    fn two_steps_are_the_endpoints() {
        let r = refs(1);
        let path = traverse(&[1.0, 2.0, -0.5], None, 2, &r).unwrap();
        assert_eq!(path.len(), 2);
        assert_eq!(path[0].point, vec![1.0, 2.0, -0.5]);
        assert_eq!(path[1].point, vec![0.0; 3]);
        assert!(traverse(&[1.0, 2.0, -0.5], None, 1, &r).is_err());
    }

    #[test]
    fn norms_shrink_toward_origin_and_midpoint_is_tangent_affine() {
        let r = refs(2);
        let c = r.curvature().unwrap();
        let start = [2.0, -1.0, 0.7];
        let path = traverse(&start, None, DEFAULT_STEPS, &r).unwrap();
        assert_eq!(path.len(), DEFAULT_STEPS);
        let norms: Vec<f64> = path.iter().map(|s| s.point.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]));

        let root = [-0.5, 0.5, 0.1];
        let path = traverse(&start, Some(&root), 11, &r).unwrap();
        let u0 = geometry::log_map_origin(&LorentzPoint::lift(&start, c).unwrap(), c).unwrap().into_space();
        let u1 = geometry::log_map_origin(&LorentzPoint::lift(&root, c).unwrap(), c).unwrap().into_space();
        let mid: Vec<f64> = u0.iter().zip(&u1).map(|(a, b)| 0.5 * (a + b)).collect();
        let m = geometry::exp_map_origin(&TangentVector::at_origin(mid), c).unwrap();
        for (a, b) in path[5].point.iter().zip(m.space()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(path[10].point, root.to_vec());
    }

    #[test]
    fn largest_inner_product_is_nearest_in_distance() {
        let r = refs(3);
        let c = r.curvature().unwrap();
        let pts = r.points().unwrap();
        for step in traverse(&[1.5, 1.5, -2.0], None, 20, &r).unwrap() {
            let p = LorentzPoint::lift(&step.point, c).unwrap();
            let by_distance = (0..pts.len())
                .min_by(|&a, &b| {
                    geometry::geodesic_distance(&p, &pts[a], c).unwrap().total_cmp(&geometry::geodesic_distance(&p, &pts[b], c).unwrap())
                })
                .unwrap();
            assert_eq!(step.nearest, by_distance);
            assert_eq!(step.nearest_label, Some(by_distance as u32 % 4));
        }
    }

    #[test]
    fn euclidean_path_is_unit_and_ends_at_centroid() {
        let vecs = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 3.0]];
        let r = EmbeddingSet::from_vectors(&vecs).unwrap();
        let path = traverse(&[0.0, -4.0], None, 6, &r).unwrap();
        assert_eq!(path[0].point, vec![0.0, -1.0]);
        let root = euclidean_root(&r).unwrap();
        assert_eq!(path[5].point, root);
        for s in &path {
            let n: f64 = s.point.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
            assert!(s.similarity <= 1.0 + 1e-12);
        }
    }
}
