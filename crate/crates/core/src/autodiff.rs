//! Minimal tape-based reverse-mode differentiation.
//!
//! Every numeric kernel in this crate that takes part in training is written
//! once, generically over [`Real`]. Evaluated with `f64` it is a plain
//! function; evaluated with [`Var`] it records each elementary operation on a
//! [`Tape`], and [`Tape::gradient`] walks the record backwards to produce
//! adjoints for every leaf.
//!
//! Non-smooth operations (`relu`, `clamp`) log which branch they took. Two
//! evaluations with identical branch logs lie in the same smooth piece of the
//! function, which is how the gradient checker recognises finite-difference
//! stencils that straddle a kink.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar interface shared by `f64` and tape variables.
pub trait Real:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;
    /// A constant living in the same context as `self`.
    fn constant_like(self, v: f64) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sinh(self) -> Self;
    fn cosh(self) -> Self;
    fn tanh(self) -> Self;
    fn asinh(self) -> Self;
    /// Inverse hyperbolic cosine; the argument must already be ≥ 1.
    fn acosh(self) -> Self;
    fn asin(self) -> Self;
    fn acos(self) -> Self;
    /// `max(0, self)`; derivative 0 on the flat side.
    fn relu(self) -> Self;
    /// Clamp into `[lo, hi]`; derivative 0 outside the interval.
    fn clamp_to(self, lo: f64, hi: f64) -> Self;
    /// Same value, no gradient.
    fn detach(self) -> Self;

    fn square(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    fn value(self) -> f64 {
        self
    }
    fn constant_like(self, v: f64) -> Self {
        v
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn asinh(self) -> Self {
        f64::asinh(self)
    }
    fn acosh(self) -> Self {
        f64::acosh(self)
    }
    fn asin(self) -> Self {
        f64::asin(self)
    }
    fn acos(self) -> Self {
        f64::acos(self)
    }
    fn relu(self) -> Self {
        self.max(0.0)
    }
    fn clamp_to(self, lo: f64, hi: f64) -> Self {
        self.clamp(lo, hi)
    }
    fn detach(self) -> Self {
        self
    }
}

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Append-only record of elementary operations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    branches: RefCell<Vec<u8>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(nodes)),
            branches: RefCell::new(Vec::new()),
        }
    }

    /// A differentiable input.
    pub fn var(&self, value: f64) -> Var<'_> {
        let idx = self.push(Node {
            parents: [NO_PARENT; 2],
            partials: [0.0; 2],
        });
        Var {
            tape: self,
            idx,
            val: value,
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Branch decisions taken by non-smooth operations, in evaluation order.
    pub fn branch_log(&self) -> Vec<u8> {
        self.branches.borrow().clone()
    }

    /// Adjoints of `output` with respect to every node on the tape.
    pub fn gradient(&self, output: Var<'_>) -> Gradients {
        assert!(
            std::ptr::eq(self, output.tape),
            "output belongs to a different tape"
        );
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        adj[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let a = adj[i];
            // skipping zero adjoints keeps 0 * inf from leaking out of clamped branches
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            for k in 0..2 {
                let p = node.parents[k];
                if p != NO_PARENT {
                    adj[p as usize] += a * node.partials[k];
                }
            }
        }
        Gradients { adjoints: adj }
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(node);
        idx
    }

    fn log_branch(&self, b: u8) {
        self.branches.borrow_mut().push(b);
    }
}

/// Adjoints produced by [`Tape::gradient`].
pub struct Gradients {
    adjoints: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adjoints[v.idx as usize]
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|&v| self.wrt(v)).collect()
    }
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var({}, #{})", self.val, self.idx)
    }
}

impl<'t> Var<'t> {
    fn unary(self, val: f64, partial: f64) -> Var<'t> {
        let idx = self.tape.push(Node {
            parents: [self.idx, NO_PARENT],
            partials: [partial, 0.0],
        });
        Var {
            tape: self.tape,
            idx,
            val,
        }
    }

    fn binary(self, other: Var<'t>, val: f64, da: f64, db: f64) -> Var<'t> {
        debug_assert!(std::ptr::eq(self.tape, other.tape));
        let idx = self.tape.push(Node {
            parents: [self.idx, other.idx],
            partials: [da, db],
        });
        Var {
            tape: self.tape,
            idx,
            val,
        }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }
}

fn safe_inv(x: f64) -> f64 {
    if x > 0.0 && x.is_finite() {
        1.0 / x
    } else {
        0.0
    }
}

impl Real for Var<'_> {
    fn value(self) -> f64 {
        self.val
    }
    fn constant_like(self, v: f64) -> Self {
        let idx = self.tape.push(Node {
            parents: [NO_PARENT; 2],
            partials: [0.0; 2],
        });
        Var {
            tape: self.tape,
            idx,
            val: v,
        }
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 * safe_inv(s))
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    fn sinh(self) -> Self {
        self.unary(self.val.sinh(), self.val.cosh())
    }
    fn cosh(self) -> Self {
        self.unary(self.val.cosh(), self.val.sinh())
    }
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn asinh(self) -> Self {
        self.unary(self.val.asinh(), 1.0 / (self.val * self.val + 1.0).sqrt())
    }
    fn acosh(self) -> Self {
        self.unary(
            self.val.acosh(),
            safe_inv((self.val * self.val - 1.0).sqrt()),
        )
    }
    fn asin(self) -> Self {
        self.unary(
            self.val.asin(),
            safe_inv((1.0 - self.val * self.val).sqrt()),
        )
    }
    fn acos(self) -> Self {
        self.unary(
            self.val.acos(),
            -safe_inv((1.0 - self.val * self.val).sqrt()),
        )
    }
    fn relu(self) -> Self {
        if self.val > 0.0 {
            self.tape.log_branch(1);
            self.unary(self.val, 1.0)
        } else {
            self.tape.log_branch(0);
            self.unary(0.0, 0.0)
        }
    }
    fn clamp_to(self, lo: f64, hi: f64) -> Self {
        if self.val < lo {
            self.tape.log_branch(0);
            self.unary(lo, 0.0)
        } else if self.val > hi {
            self.tape.log_branch(2);
            self.unary(hi, 0.0)
        } else {
            self.tape.log_branch(1);
            self.unary(self.val, 1.0)
        }
    }
    fn detach(self) -> Self {
        self.constant_like(self.val)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let q = self.val / rhs.val;
        self.binary(rhs, q, 1.0 / rhs.val, -q / rhs.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.unary(self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.unary(self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

/// Sum of a non-empty slice.
pub fn sum<T: Real>(xs: &[T]) -> T {
    let (first, rest) = xs.split_first().expect("sum of an empty slice");
    rest.iter().fold(*first, |acc, &x| acc + x)
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = a[0] * b[0];
    for i in 1..a.len() {
        acc = acc + a[i] * b[i];
    }
    acc
}

pub fn sum_sq<T: Real>(xs: &[T]) -> T {
    dot(xs, xs)
}

/// Numerically shifted log-sum-exp.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs
        .iter()
        .map(|x| x.value())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<T> = xs.iter().map(|&x| (x - m).exp()).collect();
    sum(&exps).ln() + m
}

/// Softmax cross-entropy of `logits` against class `label`.
pub fn cross_entropy<T: Real>(logits: &[T], label: usize) -> T {
    log_sum_exp(logits) - logits[label]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(-2.0);
        let f = x * x * y + y.sinh();
        let g = tape.gradient(f);
        assert_eq!(f.value(), -18.0 + (-2.0f64).sinh());
        assert_eq!(g.wrt(x), 2.0 * 3.0 * -2.0);
        assert!((g.wrt(y) - (9.0 + (-2.0f64).cosh())).abs() < 1e-12);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let tape = Tape::new();
        let x = tape.var(0.5);
        let s = x.exp();
        let f = s * s;
        let g = tape.gradient(f);
        assert!((g.wrt(x) - 2.0 * (1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn relu_and_clamp_log_branches() {
        let tape = Tape::new();
        let x = tape.var(-1.0);
        let y = tape.var(2.0);
        let f = x.relu() + y.clamp_to(0.0, 1.0) + y.relu();
        let g = tape.gradient(f);
        assert_eq!(tape.branch_log(), vec![0, 2, 1]);
        assert_eq!(g.wrt(x), 0.0);
        assert_eq!(g.wrt(y), 1.0);
    }

    #[test]
    fn clamped_acos_does_not_poison_gradient() {
        let tape = Tape::new();
        let x = tape.var(1.0);
        // acos'(1) is infinite; the guard reports 0 instead
        let f = x.clamp_to(-1.0, 1.0).acos();
        let g = tape.gradient(f);
        assert_eq!(g.wrt(x), 0.0);
        let h = (x * 0.0).acos() * 0.0 + x;
        let g = tape.gradient(h);
        assert_eq!(g.wrt(x), 1.0);
    }

    #[test]
    fn detach_stops_gradient() {
        let tape = Tape::new();
        let x = tape.var(2.0);
        let f = x * x.detach();
        let g = tape.gradient(f);
        assert_eq!(g.wrt(x), 2.0);
    }

    #[test]
    fn cross_entropy_gradient_is_softmax_minus_onehot() {
        let tape = Tape::new();
        let logits = tape.vars(&[0.3, -1.0, 2.0]);
        let loss = cross_entropy(&logits, 1);
        let g = tape.gradient(loss);
        let z: f64 = [0.3f64, -1.0, 2.0].iter().map(|v| v.exp()).sum();
        for (k, &l) in [0.3f64, -1.0, 2.0].iter().enumerate() {
            let expected = l.exp() / z - if k == 1 { 1.0 } else { 0.0 };
            assert!((g.wrt(logits[k]) - expected).abs() < 1e-12);
        }
    }
}
