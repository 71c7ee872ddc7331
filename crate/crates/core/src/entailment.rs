//! Entailment cones on the hyperboloid.
//!
//! A point `x` projects a cone away from the origin whose half-aperture
//! shrinks as `x` moves outward. The pairwise loss penalises a child embedding
//! by how far its exterior angle exceeds the parent's half-aperture.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::geometry::{self, kernel as geo, Curvature, LorentzPoint, DEGENERATE_NORM};

/// Below this geodesic separation the exterior angle is undefined.
const COINCIDENT_DISTANCE: f64 = 1e-9;
/// Floor on `(c⟨x,y⟩_L)² − 1` inside the differentiable kernel.
const DENOM_FLOOR: f64 = 1e-15;
/// Default minimum-radius constant `K`.
pub const DEFAULT_K: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConeConfig {
    /// Minimum-radius constant `K`.
    pub k: f64,
    pub curvature: Curvature,
    /// Stop the entailment gradient at the parent (shallower) embedding.
    pub stop_parent_grad: bool,
}

impl Default for ConeConfig {
    fn default() -> Self {
        ConeConfig {
            k: DEFAULT_K,
            curvature: Curvature::default(),
            stop_parent_grad: false,
        }
    }
}

impl ConeConfig {
    pub fn new(k: f64, curvature: Curvature) -> Result<Self> {
        let cfg = ConeConfig {
            k,
            curvature,
            stop_parent_grad: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k > 0.0 && self.k.is_finite() {
            Ok(())
        } else {
            Err(Error::invalid("k", format!("must be > 0, got {}", self.k)))
        }
    }
}

/// `asin(clamp(2K / (√c‖x_s‖), 0, 1))`.
pub fn half_aperture(x: &LorentzPoint, cfg: &ConeConfig) -> Result<f64> {
    cfg.validate()?;
    if geometry::spatial_norm(x) < DEGENERATE_NORM {
        return Err(Error::Degenerate("aperture is undefined at the origin"));
    }
    Ok(kernel::half_aperture(x.space(), cfg.curvature.get(), cfg.k))
}

/// `π − ∠(o, x, y)`: 0 when `y` continues outward along the ray through `x`,
/// π when it lies between the origin and `x`.
pub fn exterior_angle(x: &LorentzPoint, y: &LorentzPoint, c: Curvature) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    if geometry::spatial_norm(x) < DEGENERATE_NORM {
        return Err(Error::Degenerate("exterior angle is undefined at the origin"));
    }
    if geometry::geodesic_distance(x, y, c)? < COINCIDENT_DISTANCE {
        return Err(Error::Degenerate("exterior angle between coincident points"));
    }
    Ok(kernel::exterior_angle(x.space(), y.space(), c.get()))
}

/// `max(0, ext(parent, child) − aper(parent))`.
pub fn entailment_loss_pair(
    parent: &LorentzPoint,
    child: &LorentzPoint,
    cfg: &ConeConfig,
) -> Result<f64> {
    let aper = half_aperture(parent, cfg)?;
    let ext = exterior_angle(parent, child, cfg.curvature)?;
    Ok((ext - aper).max(0.0))
}

/// Relaxed membership `ext(parent, candidate) ≤ T · aper(parent)`.
///
/// A candidate coinciding with the parent counts as inside.
pub fn cone_membership(
    parent: &LorentzPoint,
    candidate: &LorentzPoint,
    threshold: f64,
    cfg: &ConeConfig,
) -> Result<bool> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::invalid(
            "threshold",
            format!("must be > 0, got {threshold}"),
        ));
    }
    let aper = half_aperture(parent, cfg)?;
    if geometry::geodesic_distance(parent, candidate, cfg.curvature)? < COINCIDENT_DISTANCE {
        return Ok(true);
    }
    let ext = kernel::exterior_angle(parent.space(), candidate.space(), cfg.curvature.get());
    Ok(ext <= threshold * aper)
}

/// Differentiable forms over space parts; the gradient at clamp boundaries is 0.
pub mod kernel {
    use super::*;

    pub fn half_aperture<T: Real>(xs: &[T], c: f64, k: f64) -> T {
        let n = geo::norm(xs);
        let arg = n.constant_like(2.0 * k) / (n * c.sqrt());
        arg.clamp_to(0.0, 1.0).asin()
    }

    pub fn exterior_angle<T: Real>(xs: &[T], ys: &[T], c: f64) -> T {
        let xt = geo::time(xs, c);
        let yt = geo::time(ys, c);
        let cxy = geo::inner(xt, xs, yt, ys) * c;
        let numer = yt + xt * cxy;
        let denom = geo::norm(xs) * (cxy * cxy - 1.0).clamp_to(DENOM_FLOOR, f64::INFINITY).sqrt();
        (numer / denom).clamp_to(-1.0, 1.0).acos()
    }

    pub fn entailment_loss<T: Real>(parent: &[T], child: &[T], cfg: &ConeConfig) -> T {
        let c = cfg.curvature.get();
        let detached;
        let parent = if cfg.stop_parent_grad {
            detached = parent.iter().map(|p| p.detach()).collect::<Vec<_>>();
            &detached[..]
        } else {
            parent
        };
        (exterior_angle(parent, child, c) - half_aperture(parent, c, cfg.k)).relu()
    }
}
