use serde::{Deserialize, Serialize};

use super::loss::{loss_generic, LossConfig};
use super::model::{MultiExitModel, ParamGroup};
use crate::autodiff::{Real, Tape, Var};
use crate::entailment::ConeConfig;
use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Floor on the denominator of the relative error.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// A scalar function of a parameter vector, written once for `f64` and tape variables.
pub trait Objective {
    fn eval<T: Real>(&self, params: &[T]) -> T;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose stencil crossed a hinge or clamp boundary.
    pub skipped: usize,
    pub max_relative_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_relative_error).fold(0.0, f64::max)
    }

    pub fn failing(&self) -> Vec<&GroupReport> {
        self.groups.iter().filter(|g| g.max_relative_error > self.tolerance).collect()
    }

    pub fn passed(&self) -> bool {
        self.failing().is_empty()
    }

    pub fn skipped(&self) -> usize {
        self.groups.iter().map(|g| g.skipped).sum()
    }

    /// One line per group, flagging skipped nondifferentiable points.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for g in &self.groups {
            let status = if g.max_relative_error > self.tolerance { "FAIL" } else { "ok" };
            s.push_str(&format!(
                "{:<28} {status:<4} checked={} max_rel={:.3e}",
                g.name, g.checked, g.max_relative_error
            ));
            if g.skipped > 0 {
                s.push_str(&format!(" ({} nondifferentiable point(s) skipped)", g.skipped));
            }
            s.push('\n');
        }
        s
    }
}

fn eval_on_tape<O: Objective>(obj: &O, params: &[f64]) -> (f64, Vec<u8>) {
    let tape = Tape::with_capacity(params.len() * 4);
    let vars = tape.vars(params);
    let v = obj.eval(&vars).value();
    (v, tape.branch_log())
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(RELATIVE_FLOOR)
}

/// Compares reverse-mode gradients of `obj` with central differences, per group.
///
/// A coordinate is skipped when either stencil point takes a different branch
/// of a non-smooth operation than the base point does.
pub fn check_objective<O: Objective>(obj: &O, params: &[f64], groups: &[ParamGroup], tolerance: f64) -> GradCheckReport {
    let tape = Tape::with_capacity(params.len() * 4);
    let vars: Vec<Var<'_>> = tape.vars(params);
    let out = obj.eval(&vars);
    let base_log = tape.branch_log();
    let analytic = tape.gradient(out).wrt_all(&vars);

    let mut p = params.to_vec();
    let reports = groups
        .iter()
        .map(|g| {
            let mut r = GroupReport {
                name: g.name.clone(),
                checked: 0,
                skipped: 0,
                max_relative_error: 0.0,
                max_abs_error: 0.0,
            };
            for k in g.range() {
                let orig = p[k];
                p[k] = orig + FD_STEP;
                let (fp, lp) = eval_on_tape(obj, &p);
                p[k] = orig - FD_STEP;
                let (fm, lm) = eval_on_tape(obj, &p);
                p[k] = orig;
                if lp != base_log || lm != base_log {
                    r.skipped += 1;
                    continue;
                }
                let numeric = (fp - fm) / (2.0 * FD_STEP);
                r.checked += 1;
                r.max_abs_error = r.max_abs_error.max((numeric - analytic[k]).abs());
                r.max_relative_error = r.max_relative_error.max(relative_error(analytic[k], numeric));
            }
            r
        })
        .collect();
    GradCheckReport {
        tolerance,
        groups: reports,
    }
}

struct SampleObjective<'a> {
    model: &'a MultiExitModel,
    x: &'a [f64],
    label: usize,
    weights: Vec<f64>,
    lambda: f64,
    cone: &'a ConeConfig,
}

impl Objective for SampleObjective<'_> {
    fn eval<T: Real>(&self, params: &[T]) -> T {
        let outs = self.model.forward_generic(params, self.x, self.model.num_exits() - 1);
        loss_generic(&outs, self.label, &self.weights, self.lambda, self.model.mode(), self.cone)
    }
}

/// Gradient check of the full multi-exit objective on one sample.
pub fn check_gradient(
    model: &MultiExitModel,
    x: &[f64],
    label: usize,
    loss: &LossConfig,
    cone: &ConeConfig,
    tolerance: f64,
) -> Result<GradCheckReport> {
    // Validates dimensions and label via the typed path first.
    let outs = model.forward_with_exits(x)?;
    super::loss::total_loss(&outs, label, loss, cone)?;
    if !(tolerance > 0.0) {
        return Err(Error::invalid("tolerance", "must be positive"));
    }
    let obj = SampleObjective {
        model,
        x,
        label,
        weights: loss.weights(model.num_exits())?,
        lambda: loss.lambda,
        cone,
    };
    Ok(check_objective(&obj, model.params(), model.param_groups(), tolerance))
}
