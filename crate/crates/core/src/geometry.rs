//! Lorentz model of hyperbolic space.
//!
//! Points live on the upper sheet of `⟨x, x⟩_L = -1/c` in `(n+1)`-dimensional
//! Minkowski space. Ambient vectors are laid out time-first:
//! `(time; space_1, …, space_n)`. A [`LorentzPoint`] only ever stores the
//! time coordinate it derived from its space part, so every constructed point
//! satisfies the hyperboloid constraint up to rounding.

use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Real};
use crate::error::{Error, Result};

/// Tolerance of the on-manifold invariant `|⟨x,x⟩_L + 1/c|`.
pub const ON_MANIFOLD_TOL: f64 = 1e-6;
/// Tangent vectors shorter than this take the degenerate exp/log branch.
pub const DEGENERATE_NORM: f64 = 1e-12;
/// Largest geodesic radius `√c·‖v‖` accepted by the exponential map.
pub const MAX_TANGENT_NORM: f64 = 32.0;

/// Positive curvature constant `c` of the hyperboloid `⟨x,x⟩_L = -1/c`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Curvature(f64);

impl Curvature {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Curvature(c))
        } else {
            Err(Error::invalid("curvature", format!("must be finite and > 0, got {c}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn sqrt(self) -> f64 {
        self.0.sqrt()
    }
}

impl Default for Curvature {
    fn default() -> Self {
        Curvature(1.0)
    }
}

impl TryFrom<f64> for Curvature {
    type Error = Error;
    fn try_from(c: f64) -> Result<Self> {
        Curvature::new(c)
    }
}

impl From<Curvature> for f64 {
    fn from(c: Curvature) -> f64 {
        c.0
    }
}

/// A point on the upper sheet of the hyperboloid.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzPoint {
    time: f64,
    space: Vec<f64>,
}

impl LorentzPoint {
    pub fn origin(n: usize, c: Curvature) -> Self {
        LorentzPoint {
            time: 1.0 / c.sqrt(),
            space: vec![0.0; n],
        }
    }

    /// Builds a point from its space part, deriving `time = √(1/c + ‖space‖²)`.
    pub fn lift(space: &[f64], c: Curvature) -> Result<Self> {
        if space.is_empty() {
            return Err(Error::invalid("space", "need at least one space dimension"));
        }
        if space.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("space components"));
        }
        Ok(Self::lift_unchecked(space.to_vec(), c))
    }

    pub(crate) fn lift_unchecked(space: Vec<f64>, c: Curvature) -> Self {
        let time = kernel::time(&space, c.get());
        LorentzPoint { time, space }
    }

    /// Accepts an ambient vector after checking it lies on the hyperboloid;
    /// the stored time coordinate is re-derived from the space part.
    pub fn from_ambient(ambient: &[f64], c: Curvature) -> Result<Self> {
        if ambient.len() < 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: ambient.len(),
            });
        }
        if ambient[0] <= 0.0 {
            return Err(Error::OffManifold { residual: f64::INFINITY });
        }
        let r = residual(ambient, c);
        if !(r <= ON_MANIFOLD_TOL * ambient[0].powi(2).max(1.0)) {
            return Err(Error::OffManifold { residual: r });
        }
        Self::lift(&ambient[1..], c)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn space(&self) -> &[f64] {
        &self.space
    }

    /// Number of space dimensions `n`.
    pub fn dim(&self) -> usize {
        self.space.len()
    }

    pub fn ambient(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.space.len() + 1);
        v.push(self.time);
        v.extend_from_slice(&self.space);
        v
    }

    pub fn spatial_norm(&self) -> f64 {
        spatial_norm(self)
    }

    pub fn inner(&self, other: &LorentzPoint) -> f64 {
        kernel::inner(self.time, &self.space, other.time, &other.space)
    }

    pub fn is_origin(&self) -> bool {
        self.space.iter().all(|&v| v == 0.0)
    }

    /// `|⟨x,x⟩_L + 1/c|` for this point under curvature `c`.
    pub fn manifold_residual(&self, c: Curvature) -> f64 {
        (self.inner(self) + 1.0 / c.get()).abs()
    }

    pub fn check_on_manifold(&self, c: Curvature) -> Result<()> {
        let r = self.manifold_residual(c);
        // relative to t² so far-out points are not rejected for rounding
        if r <= ON_MANIFOLD_TOL * (c.get() * self.time * self.time).max(1.0) {
            Ok(())
        } else {
            Err(Error::OffManifold { residual: r })
        }
    }
}

/// Vector in the tangent space at the origin, `[v_space, 0]` when `time == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    time: f64,
    space: Vec<f64>,
}

impl TangentVector {
    pub fn at_origin(space: Vec<f64>) -> Self {
        TangentVector { time: 0.0, space }
    }

    pub fn from_ambient(ambient: &[f64]) -> Result<Self> {
        if ambient.len() < 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: ambient.len(),
            });
        }
        Ok(TangentVector {
            time: ambient[0],
            space: ambient[1..].to_vec(),
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn space(&self) -> &[f64] {
        &self.space
    }

    pub fn into_space(self) -> Vec<f64> {
        self.space
    }

    pub fn norm(&self) -> f64 {
        self.space.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn residual(ambient: &[f64], c: Curvature) -> f64 {
    let t = ambient[0];
    let s2: f64 = ambient[1..].iter().map(|v| v * v).sum();
    (s2 - t * t + 1.0 / c.get()).abs()
}

/// `⟨x,y⟩_L = -x_t·y_t + Σ x_k·y_k` for time-first ambient vectors.
pub fn lorentz_inner(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::invalid("ambient vector", "empty"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ambient components"));
    }
    Ok(kernel::inner(x[0], &x[1..], y[0], &y[1..]))
}

pub fn lift(space: &[f64], c: Curvature) -> Result<LorentzPoint> {
    LorentzPoint::lift(space, c)
}

/// `d_L(x,y) = acosh(-c⟨x,y⟩_L) / √c`.
///
/// Near the diagonal (`-c⟨x,y⟩_L ≤ 2`) the same quantity is evaluated as
/// `2/√c · asinh(√c/2 · ‖x - y‖_L)`, which keeps `d(x,x) = 0` exact and
/// short distances accurate to rounding.
pub fn geodesic_distance(x: &LorentzPoint, y: &LorentzPoint, c: Curvature) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    x.check_on_manifold(c)?;
    y.check_on_manifold(c)?;
    Ok(distance_unchecked(x, y, c))
}

pub(crate) fn distance_unchecked(x: &LorentzPoint, y: &LorentzPoint, c: Curvature) -> f64 {
    let arg = -c.get() * x.inner(y);
    if arg > 2.0 {
        arg.max(1.0).acosh() / c.sqrt()
    } else {
        let dt = x.time - y.time;
        let ds2: f64 = x
            .space
            .iter()
            .zip(&y.space)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let chord = (ds2 - dt * dt).max(0.0).sqrt();
        2.0 / c.sqrt() * (0.5 * c.sqrt() * chord).asinh()
    }
}

/// Exponential map at the origin.
pub fn exp_map_origin(v: &TangentVector, c: Curvature) -> Result<LorentzPoint> {
    if v.time != 0.0 {
        return Err(Error::invalid(
            "tangent",
            "exp map at the origin needs a zero time component",
        ));
    }
    if v.space.is_empty() {
        return Err(Error::invalid("tangent", "need at least one space dimension"));
    }
    if v.space.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("tangent components"));
    }
    let r = v.norm() * c.sqrt();
    if r > MAX_TANGENT_NORM {
        return Err(Error::TangentTooLarge {
            norm: r,
            max: MAX_TANGENT_NORM,
        });
    }
    Ok(LorentzPoint::lift_unchecked(
        kernel::exp_map_origin(&v.space, c.get()),
        c,
    ))
}

/// Logarithmic map at the origin.
pub fn log_map_origin(x: &LorentzPoint, c: Curvature) -> Result<TangentVector> {
    x.check_on_manifold(c)?;
    Ok(TangentVector::at_origin(kernel::log_map_origin(
        &x.space,
        c.get(),
    )))
}

pub fn spatial_norm(x: &LorentzPoint) -> f64 {
    x.space.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `expm_o([α·z, 0])`, the learnable pre-projection scaling followed by the lift.
pub fn scale_then_lift(z: &[f64], alpha: f64, c: Curvature) -> Result<LorentzPoint> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid("alpha", format!("must be > 0, got {alpha}")));
    }
    let v = TangentVector::at_origin(z.iter().map(|x| x * alpha).collect());
    exp_map_origin(&v, c)
}

/// Generic kernels shared by inference (`f64`) and training ([`autodiff::Var`]).
///
/// These work on space parts only; the time coordinate is always recomputed.
pub mod kernel {
    use super::*;

    pub fn time<T: Real>(space: &[T], c: f64) -> T {
        (autodiff::sum_sq(space) + 1.0 / c).sqrt()
    }

    pub fn inner<T: Real>(xt: T, xs: &[T], yt: T, ys: &[T]) -> T {
        autodiff::dot(xs, ys) - xt * yt
    }

    pub fn norm<T: Real>(xs: &[T]) -> T {
        autodiff::sum_sq(xs).sqrt()
    }

    /// Space part of `expm_o([v, 0])`: `v · sinh(r)/r` with `r = √c‖v‖`.
    pub fn exp_map_origin<T: Real>(v: &[T], c: f64) -> Vec<T> {
        let n = norm(v);
        if n.value() < DEGENERATE_NORM {
            return v.to_vec();
        }
        let r = n * c.sqrt();
        let f = r.sinh() / r;
        v.iter().map(|&x| x * f).collect()
    }

    /// Space part of `logm_o(x)`: `x_s · asinh(r)/r` with `r = √c‖x_s‖`.
    pub fn log_map_origin<T: Real>(xs: &[T], c: f64) -> Vec<T> {
        let n = norm(xs);
        if n.value() < DEGENERATE_NORM {
            return xs.to_vec();
        }
        let r = n * c.sqrt();
        let f = r.asinh() / r;
        xs.iter().map(|&x| x * f).collect()
    }

    pub fn scale_then_lift<T: Real>(z: &[T], alpha: T, c: f64) -> Vec<T> {
        let v: Vec<T> = z.iter().map(|&x| x * alpha).collect();
        exp_map_origin(&v, c)
    }
}
