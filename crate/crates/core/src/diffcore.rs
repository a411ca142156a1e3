//! Scalar reverse-mode automatic differentiation on a Wengert tape.
//!
//! A [`Tape`] records every scalar operation eagerly: building a node also
//! computes its value. The recorded program can be replayed at a new
//! parameter assignment with [`Tape::forward`], differentiated with
//! [`Tape::backward`], and twice-differentiated along a direction with
//! [`Tape::hvp`] (forward-over-reverse).
//!
//! ```
//! use judgelab_core::diffcore::Tape;
//!
//! let mut tape = Tape::new();
//! let x = tape.param(3.0);
//! let y = tape.mul(x, x);
//! let grad = tape.backward(y).unwrap();
//! assert_eq!(tape.value(y), 9.0);
//! assert_eq!(grad, vec![6.0]);
//! ```
//!
//! Graphs are single-owner. Build one tape per evaluation; tapes are cheap.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Beyond this magnitude softplus switches to its asymptotes
/// (`x` above, `exp(x)` below). The discarded term is below `exp(-30)`.
pub const SOFTPLUS_CUTOFF: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "%{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Constant,
    Parameter,
    Add,
    Mul,
    Neg,
    Exp,
    Log,
    Sigmoid,
    Softplus,
    Tanh,
    Max,
    Reciprocal,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("non-finite value {value} at node {node} ({op:?})")]
    NonFinite { node: Var, op: OpKind, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("node {0} is not on this tape")]
    UnknownNode(Var),
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Constant,
    Parameter(usize),
    Add(Var, Var),
    Mul(Var, Var),
    Unary(Unary, Var),
    Max(Var, Var),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unary {
    Neg,
    Exp,
    Log,
    Sigmoid,
    Softplus,
    Tanh,
    Reciprocal,
}

impl Unary {
    fn kind(self) -> OpKind {
        match self {
            Unary::Neg => OpKind::Neg,
            Unary::Exp => OpKind::Exp,
            Unary::Log => OpKind::Log,
            Unary::Sigmoid => OpKind::Sigmoid,
            Unary::Softplus => OpKind::Softplus,
            Unary::Tanh => OpKind::Tanh,
            Unary::Reciprocal => OpKind::Reciprocal,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Neg => -x,
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Softplus => softplus(x),
            Unary::Tanh => x.tanh(),
            Unary::Reciprocal => 1.0 / x,
        }
    }

    /// First and second derivative at `x`, where `y = f(x)`.
    fn derivatives(self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Unary::Neg => (-1.0, 0.0),
            Unary::Exp => (y, y),
            Unary::Log => (1.0 / x, -1.0 / (x * x)),
            Unary::Sigmoid => {
                let d = y * (1.0 - y);
                (d, d * (1.0 - 2.0 * y))
            }
            Unary::Softplus => {
                if x > SOFTPLUS_CUTOFF {
                    (1.0, 0.0)
                } else if x < -SOFTPLUS_CUTOFF {
                    (y, y)
                } else {
                    let s = sigmoid(x);
                    (s, s * (1.0 - s))
                }
            }
            Unary::Tanh => {
                let d = 1.0 - y * y;
                (d, -2.0 * y * d)
            }
            Unary::Reciprocal => (-y * y, 2.0 * y * y * y),
        }
    }
}

/// Logistic function, evaluated without overflow for either sign.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` with asymptotic cutoffs at `|x| > SOFTPLUS_CUTOFF`.
pub fn softplus(x: f64) -> f64 {
    if x > SOFTPLUS_CUTOFF {
        x
    } else if x < -SOFTPLUS_CUTOFF {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`]: the `u` with `softplus(u) = y`, for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > SOFTPLUS_CUTOFF {
        y
    } else if y < (-SOFTPLUS_CUTOFF).exp() {
        y.ln()
    } else {
        // ln(e^y - 1) = y + ln(1 - e^-y)
        y + (-(-y).exp_m1()).ln()
    }
}

/// `ln σ(x) = -softplus(-x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: f64,
    grad: f64,
}

/// A recorded scalar computation graph.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Var>,
    nonfinite: Option<Var>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(nodes),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn push(&mut self, op: Op, value: f64) -> Var {
        let id = Var(self.nodes.len());
        if !value.is_finite() && self.nonfinite.is_none() {
            self.nonfinite = Some(id);
        }
        self.nodes.push(Node {
            op,
            value,
            grad: 0.0,
        });
        id
    }

    /// Registers a differentiable parameter. Parameters are numbered in
    /// creation order; gradients and HVPs are reported in that order.
    pub fn param(&mut self, value: f64) -> Var {
        let k = self.params.len();
        let v = self.push(Op::Parameter(k), value);
        self.params.push(v);
        v
    }

    pub fn params(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.param(v)).collect()
    }

    pub fn constant(&mut self, value: f64) -> Var {
        self.push(Op::Constant, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value + self.nodes[b.0].value;
        self.push(Op::Add(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value * self.nodes[b.0].value;
        self.push(Op::Mul(a, b), v)
    }

    /// `max(a, b)`; on ties the derivative flows to `a`.
    pub fn max(&mut self, a: Var, b: Var) -> Var {
        let v = self.nodes[a.0].value.max(self.nodes[b.0].value);
        self.push(Op::Max(a, b), v)
    }

    fn unary(&mut self, f: Unary, a: Var) -> Var {
        let v = f.apply(self.nodes[a.0].value);
        self.push(Op::Unary(f, a), v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(Unary::Neg, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(Unary::Log, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn recip(&mut self, a: Var) -> Var {
        self.unary(Unary::Reciprocal, a)
    }

    // Composites built from the primitive set.

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let rb = self.recip(b);
        self.mul(a, rb)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let k = self.constant(c);
        self.mul(a, k)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let k = self.constant(c);
        self.add(a, k)
    }

    /// `ln σ(a)`, stable for large `|a|`.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let na = self.neg(a);
        let sp = self.softplus(na);
        self.neg(sp)
    }

    pub fn sum(&mut self, terms: &[Var]) -> Var {
        match terms.split_first() {
            None => self.constant(0.0),
            Some((&first, rest)) => rest.iter().fold(first, |acc, &t| self.add(acc, t)),
        }
    }

    pub fn dot(&mut self, a: &[Var], b: &[Var]) -> Var {
        debug_assert_eq!(a.len(), b.len());
        let prods: Vec<Var> = a.iter().zip(b).map(|(&x, &y)| self.mul(x, y)).collect();
        self.sum(&prods)
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.0].value
    }

    pub fn op_kind(&self, v: Var) -> OpKind {
        match self.nodes[v.0].op {
            Op::Constant => OpKind::Constant,
            Op::Parameter(_) => OpKind::Parameter,
            Op::Add(..) => OpKind::Add,
            Op::Mul(..) => OpKind::Mul,
            Op::Unary(f, _) => f.kind(),
            Op::Max(..) => OpKind::Max,
        }
    }

    /// Ordered input nodes of `v`.
    pub fn inputs(&self, v: Var) -> Vec<Var> {
        match self.nodes[v.0].op {
            Op::Constant | Op::Parameter(_) => vec![],
            Op::Unary(_, a) => vec![a],
            Op::Add(a, b) | Op::Mul(a, b) | Op::Max(a, b) => vec![a, b],
        }
    }

    /// Adjoint stored by the most recent [`Tape::backward`].
    pub fn grad(&self, v: Var) -> f64 {
        self.nodes[v.0].grad
    }

    pub fn param_values(&self) -> Vec<f64> {
        self.params.iter().map(|&p| self.nodes[p.0].value).collect()
    }

    /// Errors with the first node whose value is NaN or infinite.
    pub fn check_finite(&self) -> Result<(), DiffError> {
        match self.nonfinite {
            None => Ok(()),
            Some(node) => Err(DiffError::NonFinite {
                node,
                op: self.op_kind(node),
                value: self.nodes[node.0].value,
            }),
        }
    }

    fn check_root(&self, root: Var) -> Result<(), DiffError> {
        if root.0 >= self.nodes.len() {
            return Err(DiffError::UnknownNode(root));
        }
        self.check_finite()
    }

    /// Replays the recorded program at a new parameter assignment and
    /// returns the value of `root`.
    pub fn forward(&mut self, assignment: &[f64], root: Var) -> Result<f64, DiffError> {
        if assignment.len() != self.params.len() {
            return Err(DiffError::DimensionMismatch {
                expected: self.params.len(),
                got: assignment.len(),
            });
        }
        if root.0 >= self.nodes.len() {
            return Err(DiffError::UnknownNode(root));
        }
        self.nonfinite = None;
        for i in 0..self.nodes.len() {
            let value = match self.nodes[i].op {
                Op::Constant => self.nodes[i].value,
                Op::Parameter(k) => assignment[k],
                Op::Add(a, b) => self.nodes[a.0].value + self.nodes[b.0].value,
                Op::Mul(a, b) => self.nodes[a.0].value * self.nodes[b.0].value,
                Op::Max(a, b) => self.nodes[a.0].value.max(self.nodes[b.0].value),
                Op::Unary(f, a) => f.apply(self.nodes[a.0].value),
            };
            self.nodes[i].value = value;
            if !value.is_finite() && self.nonfinite.is_none() {
                self.nonfinite = Some(Var(i));
            }
        }
        self.check_finite()?;
        Ok(self.nodes[root.0].value)
    }

    /// Reverse sweep from `root`. Returns `∂root/∂p` for every parameter in
    /// creation order and leaves per-node adjoints readable via [`Tape::grad`].
    pub fn backward(&mut self, root: Var) -> Result<Vec<f64>, DiffError> {
        self.check_root(root)?;
        for n in &mut self.nodes {
            n.grad = 0.0;
        }
        self.nodes[root.0].grad = 1.0;
        for i in (0..=root.0).rev() {
            let g = self.nodes[i].grad;
            if g == 0.0 {
                continue;
            }
            match self.nodes[i].op {
                Op::Constant | Op::Parameter(_) => {}
                Op::Add(a, b) => {
                    self.nodes[a.0].grad += g;
                    self.nodes[b.0].grad += g;
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.nodes[a.0].value, self.nodes[b.0].value);
                    self.nodes[a.0].grad += g * vb;
                    self.nodes[b.0].grad += g * va;
                }
                Op::Max(a, b) => {
                    let pick = if self.nodes[a.0].value >= self.nodes[b.0].value {
                        a
                    } else {
                        b
                    };
                    self.nodes[pick.0].grad += g;
                }
                Op::Unary(f, a) => {
                    let (d1, _) = f.derivatives(self.nodes[a.0].value, self.nodes[i].value);
                    self.nodes[a.0].grad += g * d1;
                }
            }
        }
        Ok(self.params.iter().map(|&p| self.nodes[p.0].grad).collect())
    }

    /// Gradient and Hessian-vector product `∇²root · direction` by
    /// forward-over-reverse. Does not touch the stored adjoints.
    pub fn grad_and_hvp(
        &self,
        root: Var,
        direction: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), DiffError> {
        if direction.len() != self.params.len() {
            return Err(DiffError::DimensionMismatch {
                expected: self.params.len(),
                got: direction.len(),
            });
        }
        self.check_root(root)?;
        let n = root.0 + 1;
        let val = |v: Var| self.nodes[v.0].value;

        // Tangents of node values along `direction`.
        let mut tan = vec![0.0; n];
        for i in 0..n {
            tan[i] = match self.nodes[i].op {
                Op::Constant => 0.0,
                Op::Parameter(k) => direction[k],
                Op::Add(a, b) => tan[a.0] + tan[b.0],
                Op::Mul(a, b) => tan[a.0] * val(b) + val(a) * tan[b.0],
                Op::Max(a, b) => {
                    if val(a) >= val(b) {
                        tan[a.0]
                    } else {
                        tan[b.0]
                    }
                }
                Op::Unary(f, a) => f.derivatives(val(a), self.nodes[i].value).0 * tan[a.0],
            };
        }

        // Adjoints and their tangents.
        let mut adj = vec![0.0; n];
        let mut adj_tan = vec![0.0; n];
        adj[root.0] = 1.0;
        for i in (0..n).rev() {
            let (g, gt) = (adj[i], adj_tan[i]);
            if g == 0.0 && gt == 0.0 {
                continue;
            }
            match self.nodes[i].op {
                Op::Constant | Op::Parameter(_) => {}
                Op::Add(a, b) => {
                    adj[a.0] += g;
                    adj_tan[a.0] += gt;
                    adj[b.0] += g;
                    adj_tan[b.0] += gt;
                }
                Op::Mul(a, b) => {
                    adj[a.0] += g * val(b);
                    adj_tan[a.0] += gt * val(b) + g * tan[b.0];
                    adj[b.0] += g * val(a);
                    adj_tan[b.0] += gt * val(a) + g * tan[a.0];
                }
                Op::Max(a, b) => {
                    let pick = if val(a) >= val(b) { a } else { b };
                    adj[pick.0] += g;
                    adj_tan[pick.0] += gt;
                }
                Op::Unary(f, a) => {
                    let (d1, d2) = f.derivatives(val(a), self.nodes[i].value);
                    adj[a.0] += g * d1;
                    adj_tan[a.0] += gt * d1 + g * d2 * tan[a.0];
                }
            }
        }
        let pick = |buf: &[f64]| -> Vec<f64> {
            self.params
                .iter()
                .map(|&p| if p.0 < n { buf[p.0] } else { 0.0 })
                .collect()
        };
        Ok((pick(&adj), pick(&adj_tan)))
    }

    pub fn hvp(&self, root: Var, direction: &[f64]) -> Result<Vec<f64>, DiffError> {
        self.grad_and_hvp(root, direction).map(|(_, h)| h)
    }
}

/// Central-difference gradient estimate of `f` at `point`.
pub fn finite_diff_grad<F>(mut f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let hi = f(&x);
            x[i] = orig - step;
            let lo = f(&x);
            x[i] = orig;
            (hi - lo) / (2.0 * step)
        })
        .collect()
}

/// Ordered parameter values of a model. The order is fixed for the lifetime
/// of the model and preserved by serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Registers every entry as a parameter on `tape`, in order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        tape.params(&self.values)
    }

    /// `self += scale * delta`.
    pub fn axpy(&mut self, scale: f64, delta: &[f64]) {
        debug_assert_eq!(self.values.len(), delta.len());
        for (p, d) in self.values.iter_mut().zip(delta) {
            *p += scale * d;
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
