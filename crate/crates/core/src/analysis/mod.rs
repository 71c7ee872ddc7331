//! Geometric analyses of exit embeddings.

pub mod delta;
pub mod histogram;
pub mod kmeans;
pub mod lookahead;
pub mod traverse;

use std::fmt::Write as _;

pub use delta::{curvature_estimate, delta_from_distances, delta_hyperbolicity, delta_subsampled, distance_matrix, layer_delta_table, HyperbolicityReport, LayerDelta, Metric};
pub use histogram::{norm_histogram, NormHistogram};
pub use kmeans::{hyperbolic_kmeans, lorentzian_centroid, KMeansResult, KMeansSummary};
pub use lookahead::{lookahead, lookahead_sweep, LookaheadResult, LookaheadSummary};
pub use traverse::{euclidean_root, traverse, TraversalStep, DEFAULT_STEPS};

use crate::data::{Dataset, EmbeddingSet, PointMode};
use crate::error::Result;
use crate::geometry::{self, LorentzPoint};
use crate::trainer::{Mode, MultiExitModel};

/// Embeddings of every sample at every exit, labeled and tagged with exit ids.
///
/// Rows are grouped by sample, exits in order.
pub fn collect_embeddings(model: &MultiExitModel, data: &Dataset) -> Result<EmbeddingSet> {
    let mut rows = Vec::with_capacity(data.len() * model.num_exits());
    let mut labels = Vec::with_capacity(rows.capacity());
    let mut exits = Vec::with_capacity(rows.capacity());
    for (x, &y) in data.features.iter().zip(&data.labels) {
        for (i, out) in model.forward_with_exits(x)?.iter().enumerate() {
            rows.push(out.space().to_vec());
            labels.push(y as u32);
            exits.push(i as u32);
        }
    }
    let set = match model.mode() {
        Mode::Hyperbolic => {
            let c = model.config().curvature;
            let pts = rows.iter().map(|r| LorentzPoint::lift(r, c)).collect::<Result<Vec<_>>>()?;
            EmbeddingSet::from_points(&pts, c)?
        }
        Mode::Euclidean => EmbeddingSet::from_vectors(&rows)?,
    };
    set.with_labels(labels)?.with_exit_ids(exits)
}

/// Rows restricted to the given exit ids, keeping labels and ids.
pub fn select_exits(set: &EmbeddingSet, keep: impl Fn(u32) -> bool) -> Result<EmbeddingSet> {
    let idx: Vec<usize> = (0..set.len()).filter(|&i| set.exit_ids.as_ref().is_none_or(|e| keep(e[i]))).collect();
    let values = idx.iter().flat_map(|&i| set.row(i).iter().copied()).collect();
    let mut out = EmbeddingSet::new(set.mode, set.curvature, set.dim, values)?;
    if let Some(l) = &set.labels {
        out = out.with_labels(idx.iter().map(|&i| l[i]).collect())?;
    }
    if let Some(e) = &set.exit_ids {
        out = out.with_exit_ids(idx.iter().map(|&i| e[i]).collect())?;
    }
    Ok(out)
}

/// Tangent-space coordinates at the origin for external 2D projection.
///
/// Columns `index,label,exit,t0..t{n-1}`; euclidean rows are written as stored.
pub fn tangent_csv(set: &EmbeddingSet) -> Result<String> {
    let mut s = String::from("index,label,exit");
    for k in 0..set.dim {
        let _ = write!(s, ",t{k}");
    }
    s.push('\n');
    let c = match set.mode {
        PointMode::Hyperbolic => Some(set.curvature()?),
        PointMode::Euclidean => None,
    };
    for (i, v) in set.vectors().into_iter().enumerate() {
        let coords = match c {
            Some(c) => geometry::log_map_origin(&LorentzPoint::lift(&v, c)?, c)?.into_space(),
            None => v,
        };
        let label = set.labels.as_ref().map_or(String::new(), |l| l[i].to_string());
        let exit = set.exit_ids.as_ref().map_or(String::new(), |e| e[i].to_string());
        let _ = write!(s, "{i},{label},{exit}");
        for x in coords {
            let _ = write!(s, ",{x}");
        }
        s.push('\n');
    }
    Ok(s)
}
