//! k-means on the hyperboloid with Lorentzian centroids.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_unchecked, Curvature, LorentzPoint};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<LorentzPoint>,
    /// `Σ d²(point, centroid)` after each iteration.
    pub objective: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansSummary {
    pub k: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub cluster_sizes: Vec<usize>,
}

impl KMeansResult {
    pub fn summary(&self) -> KMeansSummary {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        KMeansSummary {
            k: self.centroids.len(),
            iterations: self.objective.len(),
            converged: self.converged,
            objective: self.objective.last().copied().unwrap_or(0.0),
            cluster_sizes: sizes,
        }
    }
}

/// `s / (√c·√|⟨s,s⟩_L|)` for the ambient mean `s` of `members`.
pub fn lorentzian_centroid(members: &[&LorentzPoint], c: Curvature) -> Result<LorentzPoint> {
    let first = members.first().ok_or(Error::Empty("cluster"))?;
    let n = first.dim();
    let mut s = vec![0.0; n + 1];
    for p in members {
        s[0] += p.time();
        for (a, b) in s[1..].iter_mut().zip(p.space()) {
            *a += b;
        }
    }
    let m = members.len() as f64;
    s.iter_mut().for_each(|v| *v /= m);
    let inner = s[1..].iter().map(|v| v * v).sum::<f64>() - s[0] * s[0];
    let scale = 1.0 / (c.sqrt() * inner.abs().sqrt());
    let space: Vec<f64> = s[1..].iter().map(|v| v * scale).collect();
    LorentzPoint::lift(&space, c)
}

fn nearest(p: &LorentzPoint, centroids: &[LorentzPoint], c: Curvature) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, m) in centroids.iter().enumerate() {
        let d = distance_unchecked(p, m, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Alternates assignment and centroid updates until assignments are stable.
///
/// A centroid update is kept only when it does not raise its cluster's
/// `Σ d²`, so the objective never increases. An empty cluster is re-seeded at
/// the point farthest from its current centroid.
pub fn hyperbolic_kmeans(points: &[LorentzPoint], c: Curvature, k: usize, max_iters: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 || k > points.len() {
        return Err(Error::invalid("k", format!("must be in 1..={}, got {k}", points.len())));
    }
    for p in points {
        p.check_on_manifold(c)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = sample(&mut rng, points.len(), k).into_vec();
    init.sort_unstable();
    let mut centroids: Vec<LorentzPoint> = init.iter().map(|&i| points[i].clone()).collect();
    let mut assignments = vec![usize::MAX; points.len()];
    let mut objective = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        let mut changed = false;
        let mut dists = vec![0.0; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids, c);
            changed |= assignments[i] != j;
            assignments[i] = j;
            dists[i] = d;
        }
        for j in 0..k {
            let members: Vec<&LorentzPoint> = points.iter().zip(&assignments).filter(|(_, &a)| a == j).map(|(p, _)| p).collect();
            if members.is_empty() {
                let far = (0..points.len()).max_by(|&a, &b| dists[a].total_cmp(&dists[b])).expect("nonempty");
                centroids[j] = points[far].clone();
                dists[far] = 0.0;
                changed = true;
                continue;
            }
            let cost = |m: &LorentzPoint| members.iter().map(|p| distance_unchecked(p, m, c).powi(2)).sum::<f64>();
            let candidate = lorentzian_centroid(&members, c)?;
            if cost(&candidate) <= cost(&centroids[j]) {
                centroids[j] = candidate;
            }
        }
        let total = points.iter().zip(&assignments).map(|(p, &a)| distance_unchecked(p, &centroids[a], c).powi(2)).sum();
        objective.push(total);
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        objective,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn c1() -> Curvature {
        Curvature::new(1.0).unwrap()
    }

    fn random_points(n: usize, seed: u64) -> Vec<LorentzPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| LorentzPoint::lift(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)], c1()).unwrap())
            .collect()
    }

    #[test]
    fn k_equals_n_is_zero_objective() {
        let pts = random_points(7, 1);
        let r = hyperbolic_kmeans(&pts, c1(), 7, 10, 0).unwrap();
        assert_eq!(*r.objective.last().unwrap(), 0.0);
        let mut a = r.assignments.clone();
        a.sort_unstable();
        a.dedup();
        assert_eq!(a.len(), 7);
    }

    #[test]
    fn planted_clusters_recovered_for_any_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts = vec![];
        for center in [[-3.0, 0.0], [3.0, 0.0]] {
            for _ in 0..20 {
                let s = [center[0] + rng.random_range(-0.02..0.02), center[1] + rng.random_range(-0.02..0.02)];
                pts.push(LorentzPoint::lift(&s, c1()).unwrap());
            }
        }
        for seed in 0..10 {
            let r = hyperbolic_kmeans(&pts, c1(), 2, 50, seed).unwrap();
            assert!(r.assignments[..20].iter().all(|&a| a == r.assignments[0]));
            assert!(r.assignments[20..].iter().all(|&a| a == r.assignments[20]));
            assert_ne!(r.assignments[0], r.assignments[20]);
        }
    }

    #[test]
    fn objective_descends_and_centroids_stay_on_manifold() {
        for seed in 0..10 {
            let pts = random_points(60, 100 + seed);
            let r = hyperbolic_kmeans(&pts, c1(), 5, 100, seed).unwrap();
            for w in r.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "{:?}", r.objective);
            }
            for m in &r.centroids {
                assert!(m.manifold_residual(c1()) <= 1e-6);
            }
        }
    }

    #[test]
    fn centroid_of_single_point_is_itself() {
        let p = LorentzPoint::lift(&[0.3, -1.2], c1()).unwrap();
        let m = lorentzian_centroid(&[&p], c1()).unwrap();
        for (a, b) in m.space().iter().zip(p.space()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(hyperbolic_kmeans(&[p], c1(), 2, 5, 0).is_err());
    }
}
