//! Scalar reverse-mode automatic differentiation.
//!
//! A [`Tape`] is an append-only list of scalar nodes. Every node stores its
//! opcode, up to two operand indices (always earlier on the tape) and its
//! eagerly computed value. [`Tape::backward`] performs a single reverse sweep.
//!
//! Non-smooth primitives use fixed one-sided conventions at their kinks:
//!
//! * `max(a, b)` routes the adjoint to `a` when `a >= b`,
//! * `min(a, b)` routes the adjoint to `a` when `a <= b`,
//! * `abs` has derivative 0 at 0,
//! * `sqrt` has derivative 0 at 0,
//! * `pow(0, e)` has derivative 0 in the exponent, and in the base it is 1
//!   for `e == 1` and 0 otherwise; `pow(0, 0) == 1`.
//!
//! The [`Arith`] trait abstracts over "evaluate on plain floats" ([`Plain`])
//! and "record on a tape" ([`Tape`]) so that the logic operators are written
//! once and used by both routes.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Primitive operations that can appear on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Const,
    Var,
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    Abs,
    Exp,
    Ln,
    Pow,
    Sqrt,
    Sigmoid,
}

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::Const | Op::Var => 0,
            Op::Abs | Op::Exp | Op::Ln | Op::Sqrt | Op::Sigmoid => 1,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Min | Op::Max | Op::Pow => 2,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Const => "const",
            Op::Var => "var",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Min => "min",
            Op::Max => "max",
            Op::Abs => "abs",
            Op::Exp => "exp",
            Op::Ln => "ln",
            Op::Pow => "pow",
            Op::Sqrt => "sqrt",
            Op::Sigmoid => "sigmoid",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("ln of non-positive value {0}")]
    LnNonPositive(f64),
    #[error("division by zero ({0} / 0)")]
    DivByZero(f64),
    #[error("pow undefined for base {base} and exponent {exponent}")]
    Pow { base: f64, exponent: f64 },
    #[error("sqrt of negative value {0}")]
    SqrtNegative(f64),
    #[error("{op} expects {expected} operand(s), got {got}")]
    Arity { op: Op, expected: usize, got: usize },
    #[error("operand {0} is not on the tape")]
    UnknownNode(usize),
}

/// Applies `op` to operand values. Both evaluation routes go through here, so
/// a tape node's cached value is exactly the opcode applied to its operands.
pub fn apply(op: Op, args: &[f64]) -> Result<f64, DomainError> {
    if args.len() != op.arity() || op.arity() == 0 {
        return Err(DomainError::Arity {
            op,
            expected: op.arity(),
            got: args.len(),
        });
    }
    let a = args[0];
    let b = args.get(1).copied().unwrap_or(0.0);
    let value = match op {
        Op::Const | Op::Var => unreachable!("nullary ops rejected above"),
        Op::Add => a + b,
        Op::Sub => a - b,
        Op::Mul => a * b,
        Op::Div => {
            if b == 0.0 {
                return Err(DomainError::DivByZero(a));
            }
            a / b
        }
        Op::Min => {
            if a <= b {
                a
            } else {
                b
            }
        }
        Op::Max => {
            if a >= b {
                a
            } else {
                b
            }
        }
        Op::Abs => a.abs(),
        Op::Exp => a.exp(),
        Op::Ln => {
            if a <= 0.0 {
                return Err(DomainError::LnNonPositive(a));
            }
            a.ln()
        }
        Op::Pow => {
            if (a < 0.0 && b.fract() != 0.0) || (a == 0.0 && b < 0.0) {
                return Err(DomainError::Pow {
                    base: a,
                    exponent: b,
                });
            }
            if a == 0.0 && b == 0.0 {
                1.0
            } else {
                a.powf(b)
            }
        }
        Op::Sqrt => {
            if a < 0.0 {
                return Err(DomainError::SqrtNegative(a));
            }
            a.sqrt()
        }
        Op::Sigmoid => sigmoid(a),
    };
    Ok(value)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Local partial derivatives of `op` with respect to its operands, given the
/// operand values and the node's own value.
fn local_partials(op: Op, a: f64, b: f64, value: f64) -> (f64, f64) {
    match op {
        Op::Const | Op::Var => (0.0, 0.0),
        Op::Add => (1.0, 1.0),
        Op::Sub => (1.0, -1.0),
        Op::Mul => (b, a),
        Op::Div => (1.0 / b, -a / (b * b)),
        Op::Min => {
            if a <= b {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            }
        }
        Op::Max => {
            if a >= b {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            }
        }
        Op::Abs => {
            if a > 0.0 {
                (1.0, 0.0)
            } else if a < 0.0 {
                (-1.0, 0.0)
            } else {
                (0.0, 0.0)
            }
        }
        Op::Exp => (value, 0.0),
        Op::Ln => (1.0 / a, 0.0),
        Op::Pow => {
            if a == 0.0 {
                (if b == 1.0 { 1.0 } else { 0.0 }, 0.0)
            } else {
                let d_base = b * a.powf(b - 1.0);
                let d_exp = if a > 0.0 { value * a.ln() } else { 0.0 };
                (d_base, d_exp)
            }
        }
        Op::Sqrt => {
            if value > 0.0 {
                (0.5 / value, 0.0)
            } else {
                (0.0, 0.0)
            }
        }
        Op::Sigmoid => (value * (1.0 - value), 0.0),
    }
}

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    args: [usize; 2],
    value: f64,
}

#[derive(Clone, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    // Smallest distance to a branch boundary seen while recording.
    margin: f64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            margin: f64::INFINITY,
        }
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Tape {
            nodes: Vec::with_capacity(capacity),
            margin: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every node but keeps the allocation.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.margin = f64::INFINITY;
    }

    fn push(&mut self, op: Op, args: [usize; 2], value: f64) -> NodeId {
        self.nodes.push(Node { op, args, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        self.push(Op::Const, [0, 0], value)
    }

    /// Adds an independent variable.
    pub fn var(&mut self, value: f64) -> NodeId {
        self.push(Op::Var, [0, 0], value)
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> Op {
        self.nodes[id.0].op
    }

    /// Records `op` applied to operands already on the tape. The value is
    /// computed eagerly.
    pub fn record(&mut self, op: Op, operands: &[NodeId]) -> Result<NodeId, DomainError> {
        if let Some(bad) = operands.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(DomainError::UnknownNode(bad.0));
        }
        let mut vals = [0.0; 2];
        for (slot, id) in vals.iter_mut().zip(operands) {
            *slot = self.nodes[id.0].value;
        }
        let value = apply(op, &vals[..operands.len().min(2)])?;
        match op {
            Op::Min | Op::Max => self.note_margin((vals[0] - vals[1]).abs()),
            Op::Abs => self.note_margin(vals[0].abs()),
            _ => {}
        }
        let mut args = [0usize; 2];
        for (slot, id) in args.iter_mut().zip(operands) {
            *slot = id.0;
        }
        Ok(self.push(op, args, value))
    }

    fn note_margin(&mut self, m: f64) {
        if m < self.margin {
            self.margin = m;
        }
    }

    /// Smallest distance from a branch boundary (min/max/abs kinks and any
    /// value-dependent branch reported through [`Arith::note_branch`]) seen
    /// since the tape was created or cleared. Gradient checks use this to
    /// stay away from non-differentiable points.
    pub fn branch_margin(&self) -> f64 {
        self.margin
    }

    /// One reverse sweep from `root`. Returns the adjoint of every node.
    pub fn backward(&self, root: NodeId) -> Vec<f64> {
        let mut adjoint = vec![0.0; root.0 + 1];
        adjoint[root.0] = 1.0;
        for i in (0..=root.0).rev() {
            let upstream = adjoint[i];
            if upstream == 0.0 {
                continue;
            }
            let node = &self.nodes[i];
            let arity = node.op.arity();
            if arity == 0 {
                continue;
            }
            let a = self.nodes[node.args[0]].value;
            let b = if arity == 2 {
                self.nodes[node.args[1]].value
            } else {
                0.0
            };
            let (da, db) = local_partials(node.op, a, b, node.value);
            adjoint[node.args[0]] += upstream * da;
            if arity == 2 {
                adjoint[node.args[1]] += upstream * db;
            }
        }
        adjoint
    }

    /// Partial derivatives of `root` with respect to `wrt`. Variables the
    /// root does not depend on get 0.
    pub fn grad(&self, root: NodeId, wrt: &[NodeId]) -> Gradient {
        let adjoint = self.backward(root);
        let partials = wrt
            .iter()
            .map(|id| (*id, adjoint.get(id.0).copied().unwrap_or(0.0)))
            .collect();
        Gradient { partials }
    }
}

/// Map from variable to partial derivative.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradient {
    partials: BTreeMap<NodeId, f64>,
}

impl Gradient {
    pub fn get(&self, id: NodeId) -> f64 {
        self.partials.get(&id).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.partials.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.partials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partials.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.partials.values().all(|v| v.is_finite())
    }
}

/// Central finite differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff<F, E>(mut f: F, point: &[f64], h: f64) -> Result<Vec<f64>, E>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
{
    assert!(h > 0.0, "finite difference step must be positive");
    let mut x = point.to_vec();
    let mut out = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + h;
        let hi = f(&x)?;
        x[i] = orig - h;
        let lo = f(&x)?;
        x[i] = orig;
        out.push((hi - lo) / (2.0 * h));
    }
    Ok(out)
}

/// Arithmetic over some value representation: plain floats or tape nodes.
pub trait Arith {
    type V: Copy;

    fn constant(&mut self, c: f64) -> Self::V;
    fn value(&self, v: Self::V) -> f64;
    fn apply(&mut self, op: Op, args: &[Self::V]) -> Result<Self::V, DomainError>;

    /// Reports a value-dependent branch on `lhs` vs `rhs`.
    fn note_branch(&mut self, _lhs: f64, _rhs: f64) {}

    fn add(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, DomainError> {
        self.apply(Op::Add, &[a, b])
    }
    fn sub(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, DomainError> {
        self.apply(Op::Sub, &[a, b])
    }
    fn mul(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, DomainError> {
        self.apply(Op::Mul, &[a, b])
    }
    fn div(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, DomainError> {
        self.apply(Op::Div, &[a, b])
    }
    fn min(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, DomainError> {
        self.apply(Op::Min, &[a, b])
    }
    fn max(&mut self, a: Self::V, b: Self::V) -> Result<Self::V, DomainError> {
        self.apply(Op::Max, &[a, b])
    }
    fn pow(&mut self, base: Self::V, exponent: Self::V) -> Result<Self::V, DomainError> {
        self.apply(Op::Pow, &[base, exponent])
    }
    fn abs(&mut self, a: Self::V) -> Result<Self::V, DomainError> {
        self.apply(Op::Abs, &[a])
    }
    fn exp(&mut self, a: Self::V) -> Result<Self::V, DomainError> {
        self.apply(Op::Exp, &[a])
    }
    fn ln(&mut self, a: Self::V) -> Result<Self::V, DomainError> {
        self.apply(Op::Ln, &[a])
    }
    fn sqrt(&mut self, a: Self::V) -> Result<Self::V, DomainError> {
        self.apply(Op::Sqrt, &[a])
    }
    fn sigmoid(&mut self, a: Self::V) -> Result<Self::V, DomainError> {
        self.apply(Op::Sigmoid, &[a])
    }
    /// `1 - a`
    fn complement(&mut self, a: Self::V) -> Result<Self::V, DomainError> {
        let one = self.constant(1.0);
        self.sub(one, a)
    }
}

/// Direct evaluation on `f64`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Plain;

impl Arith for Plain {
    type V = f64;

    fn constant(&mut self, c: f64) -> f64 {
        c
    }

    fn value(&self, v: f64) -> f64 {
        v
    }

    fn apply(&mut self, op: Op, args: &[f64]) -> Result<f64, DomainError> {
        apply(op, args)
    }
}

impl Arith for Tape {
    type V = NodeId;

    fn constant(&mut self, c: f64) -> NodeId {
        Tape::constant(self, c)
    }

    fn value(&self, v: NodeId) -> f64 {
        Tape::value(self, v)
    }

    fn apply(&mut self, op: Op, args: &[NodeId]) -> Result<NodeId, DomainError> {
        self.record(op, args)
    }

    fn note_branch(&mut self, lhs: f64, rhs: f64) {
        self.note_margin((lhs - rhs).abs());
    }
}
