//! Retrieval of deeper-exit embeddings inside a query's relaxed entailment cone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, PointMode};
use crate::entailment::{cone_membership, ConeConfig};
use crate::error::{Error, Result};
use crate::geometry::LorentzPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadResult {
    /// Indices into the reference set, ascending.
    pub retrieved: Vec<usize>,
    pub labels: Vec<u32>,
    /// Most frequent retrieved label, ties to the smallest; `None` without coverage.
    pub majority: Option<u32>,
    /// Fraction of retrieved labels equal to the query label.
    pub precision: Option<f64>,
}

impl LookaheadResult {
    pub fn covered(&self) -> bool {
        !self.retrieved.is_empty()
    }
}

fn reference_points(refs: &EmbeddingSet) -> Result<Vec<LorentzPoint>> {
    if refs.mode != PointMode::Hyperbolic {
        return Err(Error::invalid("references", "lookahead needs hyperbolic embeddings"));
    }
    refs.points()
}

fn lookahead_points(
    query: &LorentzPoint,
    query_exit: u32,
    query_label: Option<u32>,
    refs: &EmbeddingSet,
    points: &[LorentzPoint],
    threshold: f64,
    cone: &ConeConfig,
) -> Result<LookaheadResult> {
    let mut retrieved = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if let Some(ids) = &refs.exit_ids {
            if ids[i] <= query_exit {
                continue;
            }
        }
        if cone_membership(query, p, threshold, cone)? {
            retrieved.push(i);
        }
    }
    let labels: Vec<u32> = match &refs.labels {
        Some(l) => retrieved.iter().map(|&i| l[i]).collect(),
        None => Vec::new(),
    };
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &l in &labels {
        *counts.entry(l).or_default() += 1;
    }
    let majority = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(l, _)| *l);
    let precision = match query_label {
        Some(q) if !labels.is_empty() => Some(labels.iter().filter(|&&l| l == q).count() as f64 / labels.len() as f64),
        _ => None,
    };
    Ok(LookaheadResult {
        retrieved,
        labels,
        majority,
        precision,
    })
}

/// References from exits after `query_exit` (all references when exit ids are
/// absent) with `ext(query, ref) ≤ T · aper(query)`.
pub fn lookahead(
    query: &LorentzPoint,
    query_exit: u32,
    query_label: Option<u32>,
    refs: &EmbeddingSet,
    threshold: f64,
    cone: &ConeConfig,
) -> Result<LookaheadResult> {
    let points = reference_points(refs)?;
    lookahead_points(query, query_exit, query_label, refs, &points, threshold, cone)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookaheadSummary {
    pub threshold: f64,
    pub queries: usize,
    /// Fraction of queries retrieving at least one reference.
    pub coverage: f64,
    /// Mean per-query precision over covered queries.
    pub precision: Option<f64>,
    /// Fraction of covered queries whose majority label is correct.
    pub majority_accuracy: Option<f64>,
    pub mean_retrieved: f64,
}

/// Runs every query of `queries` (labels and exit ids required) at each threshold.
pub fn lookahead_sweep(queries: &EmbeddingSet, refs: &EmbeddingSet, thresholds: &[f64], cone: &ConeConfig) -> Result<Vec<LookaheadSummary>> {
    let qpoints = reference_points(queries)?;
    let rpoints = reference_points(refs)?;
    let qlabels = queries.labels.as_ref().ok_or(Error::invalid("queries", "labels are required"))?;
    let qexits = queries.exit_ids.as_ref().ok_or(Error::invalid("queries", "exit ids are required"))?;
    if qpoints.is_empty() {
        return Err(Error::Empty("queries"));
    }
    thresholds
        .iter()
        .map(|&t| {
            let mut covered = 0usize;
            let mut precision = 0.0;
            let mut majority = 0usize;
            let mut retrieved = 0usize;
            for (i, q) in qpoints.iter().enumerate() {
                let r = lookahead_points(q, qexits[i], Some(qlabels[i]), refs, &rpoints, t, cone)?;
                retrieved += r.retrieved.len();
                if let Some(p) = r.precision {
                    covered += 1;
                    precision += p;
                    majority += usize::from(r.majority == Some(qlabels[i]));
                }
            }
            let n = qpoints.len() as f64;
            Ok(LookaheadSummary {
                threshold: t,
                queries: qpoints.len(),
                coverage: covered as f64 / n,
                precision: (covered > 0).then(|| precision / covered as f64),
                majority_accuracy: (covered > 0).then(|| majority as f64 / covered as f64),
                mean_retrieved: retrieved as f64 / n,
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

    fn c1() -> Curvature {
        Curvature::new(1.0).unwrap()
    }

    #[test]
    fn outward_ray_is_retrieved() {
        let q = LorentzPoint::lift(&[0.6, 0.8], c1()).unwrap();
        let pts: Vec<LorentzPoint> = [1.5, 2.0, 4.0].iter().map(|&r| LorentzPoint::lift(&[0.6 * r, 0.8 * r], c1()).unwrap()).collect();
        let refs = EmbeddingSet::from_points(&pts, c1()).unwrap().with_labels(vec![3, 3, 1]).unwrap().with_exit_ids(vec![1, 2, 2]).unwrap();
        let cone = ConeConfig::new(0.1, c1()).unwrap();
        for t in [0.9, 1.0, 1.1] {
            let r = lookahead(&q, 0, Some(3), &refs, t, &cone).unwrap();
            assert_eq!(r.retrieved, vec![0, 1, 2]);
            assert_eq!(r.majority, Some(3));
            assert!((r.precision.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        }
        let r = lookahead(&q, 1, None, &refs, 1.0, &cone).unwrap();
        assert_eq!(r.retrieved, vec![1, 2]);
        assert!(r.precision.is_none());
    }

    #[test]
    fn retrieval_nested_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<LorentzPoint> = (0..200)
            .map(|_| LorentzPoint::lift(&[rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)], c1()).unwrap())
            .collect();
        let refs = EmbeddingSet::from_points(&pts, c1()).unwrap();
        let cone = ConeConfig::new(0.1, c1()).unwrap();
        let q = LorentzPoint::lift(&[0.5, 0.2], c1()).unwrap();
        let mut prev: Vec<usize> = vec![];
        for t in [0.5, 1.0, 1.2, 2.0, 5.0] {
            let r = lookahead(&q, 0, None, &refs, t, &cone).unwrap();
            assert!(prev.iter().all(|i| r.retrieved.contains(i)));
            prev = r.retrieved;
        }
        assert!(!prev.is_empty());
        assert!(lookahead(&q, 0, None, &refs, 0.0, &cone).is_err());
    }
}
