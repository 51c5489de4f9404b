//! Constraint formulas over network inputs and outputs.
//!
//! A [`Formula`] is built from comparisons between arithmetic [`Expr`]s,
//! the usual connectives, and finite universal quantification ([`Formula::BigAnd`])
//! over a named table of class-index tuples. The text form is handled by
//! [`parse`] and the [`Display`](std::fmt::Display) impls; the two round-trip.

mod parser;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::autodiff::{Arith, DomainError, Plain};

pub use parser::{parse, ParseContext, ParseError, ParseErrorKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [
        CmpOp::Le,
        CmpOp::Lt,
        CmpOp::Ge,
        CmpOp::Gt,
        CmpOp::Eq,
        CmpOp::Ne,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    /// Exact comparison on reals.
    pub fn holds(self, x: f64, y: f64) -> bool {
        match self {
            CmpOp::Le => x <= y,
            CmpOp::Lt => x < y,
            CmpOp::Ge => x >= y,
            CmpOp::Gt => x > y,
            CmpOp::Eq => x == y,
            CmpOp::Ne => x != y,
        }
    }
}

/// A class or input position: a literal, or a component of a quantified tuple.
///
/// `Bound { component: None }` refers to the whole tuple. It is only
/// meaningful inside `sum(...)`, or for singleton tuples.
#[derive(Clone, Debug, PartialEq)]
pub enum Index {
    Lit(usize),
    Bound {
        var: String,
        component: Option<usize>,
    },
}

/// Whole vector referenced by [`Expr::Norm2Diff`]; the `Pair*` variants are
/// the second sample `x'` of a paired constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VecRef {
    Output,
    Input,
    PairOutput,
    PairInput,
}

impl VecRef {
    fn keyword(self) -> &'static str {
        match self {
            VecRef::Output => "out",
            VecRef::Input => "in",
            VecRef::PairOutput => "out'",
            VecRef::PairInput => "in'",
        }
    }

    fn is_pair(self) -> bool {
        matches!(self, VecRef::PairOutput | VecRef::PairInput)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Input(Index),
    /// Network output (class probability) at the given index.
    Output(Index),
    Sum(Vec<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// Euclidean distance between two whole vectors.
    Norm2Diff(VecRef, VecRef),
}

/// A named, non-empty table of class-index tuples for quantification.
#[derive(Clone, Debug, PartialEq)]
pub struct BindingSet {
    pub name: String,
    pub members: Vec<Vec<usize>>,
}

impl BindingSet {
    pub fn new(
        name: impl Into<String>,
        members: Vec<Vec<usize>>,
    ) -> Result<BindingSet, FormulaError> {
        let name = name.into();
        if members.is_empty() || members.iter().any(|m| m.is_empty()) {
            return Err(FormulaError::EmptyBindingSet(name));
        }
        Ok(BindingSet { name, members })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Formula {
    Cmp(CmpOp, Expr, Expr),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    /// Conjunction of `body` over every tuple of `set`, with `var` bound to it.
    BigAnd {
        var: String,
        set: BindingSet,
        body: Box<Formula>,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulaError {
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("binding set `{0}` must be non-empty")]
    EmptyBindingSet(String),
    #[error("`{var}` has {arity} component(s); component {component} requested")]
    ComponentOutOfRange {
        var: String,
        component: usize,
        arity: usize,
    },
    #[error("`{0}` is bound to a tuple; select a component with `.` or use it inside sum(...)")]
    TupleOutsideSum(String),
    #[error("{what} index {index} is not available (length {len})")]
    UnboundReference {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("paired sample `{0}` is not available")]
    MissingPair(&'static str),
    #[error("vector length mismatch in norm2: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Values for the references a formula can make.
#[derive(Clone, Copy, Debug)]
pub struct Env<'a, V> {
    pub outputs: &'a [V],
    pub inputs: &'a [V],
    pub pair_outputs: Option<&'a [V]>,
    pub pair_inputs: Option<&'a [V]>,
}

impl<'a, V> Env<'a, V> {
    pub fn new(outputs: &'a [V]) -> Self {
        Env {
            outputs,
            inputs: &[],
            pair_outputs: None,
            pair_inputs: None,
        }
    }

    pub fn with_inputs(mut self, inputs: &'a [V]) -> Self {
        self.inputs = inputs;
        self
    }

    pub fn with_pair(mut self, outputs: &'a [V], inputs: &'a [V]) -> Self {
        self.pair_outputs = Some(outputs);
        self.pair_inputs = Some(inputs);
        self
    }

    fn vector(&self, r: VecRef) -> Result<&'a [V], FormulaError> {
        match r {
            VecRef::Output => Ok(self.outputs),
            VecRef::Input => Ok(self.inputs),
            VecRef::PairOutput => self.pair_outputs.ok_or(FormulaError::MissingPair("out'")),
            VecRef::PairInput => self.pair_inputs.ok_or(FormulaError::MissingPair("in'")),
        }
    }
}

type Scope<'s> = Vec<(&'s str, &'s [usize])>;

fn lookup<'s>(scope: &Scope<'s>, var: &str) -> Result<&'s [usize], FormulaError> {
    scope
        .iter()
        .rev()
        .find(|(name, _)| *name == var)
        .map(|(_, m)| *m)
        .ok_or_else(|| FormulaError::UnboundVariable(var.to_string()))
}

fn subst_index(index: &Index, scope: &Scope<'_>) -> Result<Index, FormulaError> {
    match index {
        Index::Lit(i) => Ok(Index::Lit(*i)),
        Index::Bound { var, component } => {
            let tuple = match lookup(scope, var) {
                Ok(t) => t,
                // Variables bound outside the expanded region stay symbolic.
                Err(_) => return Ok(index.clone()),
            };
            let c = match component {
                Some(c) => *c,
                None if tuple.len() == 1 => 0,
                None => return Err(FormulaError::TupleOutsideSum(var.clone())),
            };
            tuple
                .get(c)
                .map(|i| Index::Lit(*i))
                .ok_or_else(|| FormulaError::ComponentOutOfRange {
                    var: var.clone(),
                    component: c,
                    arity: tuple.len(),
                })
        }
    }
}

impl Expr {
    pub fn output(i: usize) -> Expr {
        Expr::Output(Index::Lit(i))
    }

    pub fn input(i: usize) -> Expr {
        Expr::Input(Index::Lit(i))
    }

    fn subst(&self, scope: &Scope<'_>) -> Result<Expr, FormulaError> {
        Ok(match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Input(i) => Expr::Input(subst_index(i, scope)?),
            Expr::Output(i) => Expr::Output(subst_index(i, scope)?),
            Expr::Sum(items) => {
                let mut out = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        Expr::Output(Index::Bound {
                            var,
                            component: None,
                        }) if lookup(scope, var).is_ok() => {
                            let tuple = lookup(scope, var)?;
                            out.extend(tuple.iter().map(|i| Expr::output(*i)));
                        }
                        Expr::Input(Index::Bound {
                            var,
                            component: None,
                        }) if lookup(scope, var).is_ok() => {
                            let tuple = lookup(scope, var)?;
                            out.extend(tuple.iter().map(|i| Expr::input(*i)));
                        }
                        other => out.push(other.subst(scope)?),
                    }
                }
                Expr::Sum(out)
            }
            Expr::Add(a, b) => Expr::Add(Box::new(a.subst(scope)?), Box::new(b.subst(scope)?)),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.subst(scope)?), Box::new(b.subst(scope)?)),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.subst(scope)?), Box::new(b.subst(scope)?)),
            Expr::Norm2Diff(a, b) => Expr::Norm2Diff(*a, *b),
        })
    }

    /// Evaluates the expression under any arithmetic (plain floats or a tape).
    pub fn evaluate<A: Arith>(&self, arith: &mut A, env: &Env<'_, A::V>) -> Result<A::V, FormulaError> {
        match self {
            Expr::Const(c) => Ok(arith.constant(*c)),
            Expr::Output(i) => resolve(env.outputs, i, "output"),
            Expr::Input(i) => resolve(env.inputs, i, "input"),
            Expr::Sum(items) => {
                let mut acc: Option<A::V> = None;
                for item in items {
                    let v = item.evaluate(arith, env)?;
                    acc = Some(match acc {
                        None => v,
                        Some(a) => arith.add(a, v)?,
                    });
                }
                Ok(acc.unwrap_or_else(|| arith.constant(0.0)))
            }
            Expr::Add(a, b) => {
                let (a, b) = (a.evaluate(arith, env)?, b.evaluate(arith, env)?);
                Ok(arith.add(a, b)?)
            }
            Expr::Sub(a, b) => {
                let (a, b) = (a.evaluate(arith, env)?, b.evaluate(arith, env)?);
                Ok(arith.sub(a, b)?)
            }
            Expr::Mul(a, b) => {
                let (a, b) = (a.evaluate(arith, env)?, b.evaluate(arith, env)?);
                Ok(arith.mul(a, b)?)
            }
            Expr::Norm2Diff(a, b) => {
                let (u, v) = (env.vector(*a)?, env.vector(*b)?);
                if u.len() != v.len() {
                    return Err(FormulaError::LengthMismatch(u.len(), v.len()));
                }
                let mut acc = arith.constant(0.0);
                for (x, y) in u.iter().zip(v) {
                    let d = arith.sub(*x, *y)?;
                    let sq = arith.mul(d, d)?;
                    acc = arith.add(acc, sq)?;
                }
                Ok(arith.sqrt(acc)?)
            }
        }
    }

    fn visit_refs(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Sum(items) => items.iter().for_each(|e| e.visit_refs(f)),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.visit_refs(f);
                b.visit_refs(f);
            }
            _ => {}
        }
    }
}

fn resolve<V: Copy>(values: &[V], index: &Index, what: &'static str) -> Result<V, FormulaError> {
    match index {
        Index::Lit(i) => values.get(*i).copied().ok_or(FormulaError::UnboundReference {
            what,
            index: *i,
            len: values.len(),
        }),
        Index::Bound { var, .. } => Err(FormulaError::UnboundVariable(var.clone())),
    }
}

impl Formula {
    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Formula {
        Formula::Cmp(op, lhs, rhs)
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Formula) -> Formula {
        Formula::Not(Box::new(a))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn big_and(var: impl Into<String>, set: BindingSet, body: Formula) -> Formula {
        Formula::BigAnd {
            var: var.into(),
            set,
            body: Box::new(body),
        }
    }

    /// Replaces every quantifier by the left fold of its instances under
    /// conjunction. The result contains only literal indices.
    pub fn expand(&self) -> Result<Formula, FormulaError> {
        self.expand_in(&mut Vec::new())
    }

    fn expand_in<'s>(&'s self, scope: &mut Scope<'s>) -> Result<Formula, FormulaError> {
        Ok(match self {
            Formula::Cmp(op, a, b) => Formula::Cmp(*op, a.subst(scope)?, b.subst(scope)?),
            Formula::And(a, b) => Formula::and(a.expand_in(scope)?, b.expand_in(scope)?),
            Formula::Or(a, b) => Formula::or(a.expand_in(scope)?, b.expand_in(scope)?),
            Formula::Not(a) => Formula::not(a.expand_in(scope)?),
            Formula::Implies(a, b) => Formula::implies(a.expand_in(scope)?, b.expand_in(scope)?),
            Formula::BigAnd { var, set, body } => {
                let mut acc: Option<Formula> = None;
                for member in &set.members {
                    scope.push((var.as_str(), member.as_slice()));
                    let inst = body.expand_in(scope);
                    scope.pop();
                    let inst = inst?;
                    acc = Some(match acc {
                        None => inst,
                        Some(prev) => Formula::and(prev, inst),
                    });
                }
                acc.ok_or_else(|| FormulaError::EmptyBindingSet(set.name.clone()))?
            }
        })
    }

    pub fn contains_quantifier(&self) -> bool {
        match self {
            Formula::Cmp(..) => false,
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.contains_quantifier() || b.contains_quantifier()
            }
            Formula::Not(a) => a.contains_quantifier(),
            Formula::BigAnd { .. } => true,
        }
    }

    pub fn contains_not(&self) -> bool {
        match self {
            Formula::Cmp(..) => false,
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.contains_not() || b.contains_not()
            }
            Formula::Not(_) => true,
            Formula::BigAnd { body, .. } => body.contains_not(),
        }
    }

    fn visit_exprs(&self, f: &mut impl FnMut(&Expr)) {
        match self {
            Formula::Cmp(_, a, b) => {
                a.visit_refs(f);
                b.visit_refs(f);
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.visit_exprs(f);
                b.visit_exprs(f);
            }
            Formula::Not(a) => a.visit_exprs(f),
            Formula::BigAnd { body, .. } => body.visit_exprs(f),
        }
    }

    /// True if the formula relates two samples (`out'`/`in'`).
    pub fn uses_pairs(&self) -> bool {
        let mut found = false;
        self.visit_exprs(&mut |e| {
            if let Expr::Norm2Diff(a, b) = e {
                found |= a.is_pair() || b.is_pair();
            }
        });
        found
    }

    /// True if the formula reads network inputs.
    pub fn uses_inputs(&self) -> bool {
        let mut found = false;
        self.visit_exprs(&mut |e| {
            found |= matches!(
                e,
                Expr::Input(_) | Expr::Norm2Diff(VecRef::Input | VecRef::PairInput, _)
            ) || matches!(e, Expr::Norm2Diff(_, VecRef::Input | VecRef::PairInput));
        });
        found
    }

    /// Binding tables referenced by quantifiers, keyed by name.
    pub fn binding_sets(&self) -> BTreeMap<String, BindingSet> {
        let mut out = BTreeMap::new();
        self.collect_sets(&mut out);
        out
    }

    fn collect_sets(&self, out: &mut BTreeMap<String, BindingSet>) {
        match self {
            Formula::Cmp(..) => {}
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.collect_sets(out);
                b.collect_sets(out);
            }
            Formula::Not(a) => a.collect_sets(out),
            Formula::BigAnd { set, body, .. } => {
                out.insert(set.name.clone(), set.clone());
                body.collect_sets(out);
            }
        }
    }
}

fn negate_cmp(op: CmpOp, a: Expr, b: Expr) -> Formula {
    match op {
        // not (x <= y)  ==>  y < x
        CmpOp::Le => Formula::Cmp(CmpOp::Lt, b, a),
        // not (x < y)  ==>  y <= x
        CmpOp::Lt => Formula::Cmp(CmpOp::Le, b, a),
        CmpOp::Ge => Formula::Cmp(CmpOp::Lt, a, b),
        CmpOp::Gt => Formula::Cmp(CmpOp::Le, a, b),
        CmpOp::Eq => Formula::Cmp(CmpOp::Ne, a, b),
        CmpOp::Ne => Formula::Cmp(CmpOp::Eq, a, b),
    }
}

/// Pushes every negation down to the comparisons, replacing negated
/// comparisons by their duals. Implications are kept; a negated implication
/// becomes `a and not b`. A negated quantifier is expanded first.
pub fn push_negations(f: &Formula) -> Formula {
    push(f.clone(), false)
}

fn push(f: Formula, negate: bool) -> Formula {
    match f {
        Formula::Cmp(op, a, b) => {
            if negate {
                negate_cmp(op, a, b)
            } else {
                Formula::Cmp(op, a, b)
            }
        }
        Formula::And(a, b) => {
            if negate {
                Formula::or(push(*a, true), push(*b, true))
            } else {
                Formula::and(push(*a, false), push(*b, false))
            }
        }
        Formula::Or(a, b) => {
            if negate {
                Formula::and(push(*a, true), push(*b, true))
            } else {
                Formula::or(push(*a, false), push(*b, false))
            }
        }
        Formula::Not(a) => push(*a, !negate),
        Formula::Implies(a, b) => {
            if negate {
                Formula::and(push(*a, false), push(*b, true))
            } else {
                Formula::implies(push(*a, false), push(*b, false))
            }
        }
        Formula::BigAnd { var, set, body } => {
            if negate {
                let whole = Formula::BigAnd { var, set, body };
                match whole.expand() {
                    Ok(expanded) => push(expanded, true),
                    // Ill-formed body: leave it for compile/eval to report.
                    Err(_) => Formula::not(whole),
                }
            } else {
                Formula::BigAnd {
                    var,
                    set,
                    body: Box::new(push(*body, false)),
                }
            }
        }
    }
}

/// Rewrites `a -> b` as `not a or b` and then pushes negations.
pub fn eliminate_implications(f: &Formula) -> Formula {
    fn go(f: Formula) -> Formula {
        match f {
            Formula::Cmp(..) => f,
            Formula::And(a, b) => Formula::and(go(*a), go(*b)),
            Formula::Or(a, b) => Formula::or(go(*a), go(*b)),
            Formula::Not(a) => Formula::not(go(*a)),
            Formula::Implies(a, b) => Formula::or(Formula::not(go(*a)), go(*b)),
            Formula::BigAnd { var, set, body } => Formula::BigAnd {
                var,
                set,
                body: Box::new(go(*body)),
            },
        }
    }
    push_negations(&go(f.clone()))
}

/// Classical two-valued evaluation with exact real comparisons.
pub fn eval_crisp(f: &Formula, env: &Env<'_, f64>) -> Result<bool, FormulaError> {
    if f.contains_quantifier() {
        return eval_expanded(&f.expand()?, env);
    }
    eval_expanded(f, env)
}

fn eval_expanded(f: &Formula, env: &Env<'_, f64>) -> Result<bool, FormulaError> {
    Ok(match f {
        Formula::Cmp(op, a, b) => {
            let x = a.evaluate(&mut Plain, env)?;
            let y = b.evaluate(&mut Plain, env)?;
            op.holds(x, y)
        }
        Formula::And(a, b) => {
            // Both sides are evaluated so unbound references always surface.
            let (a, b) = (eval_expanded(a, env)?, eval_expanded(b, env)?);
            a && b
        }
        Formula::Or(a, b) => {
            let (a, b) = (eval_expanded(a, env)?, eval_expanded(b, env)?);
            a || b
        }
        Formula::Not(a) => !eval_expanded(a, env)?,
        Formula::Implies(a, b) => {
            let (a, b) = (eval_expanded(a, env)?, eval_expanded(b, env)?);
            !a || b
        }
        Formula::BigAnd { .. } => return eval_crisp(f, env),
    })
}

// ---------------------------------------------------------------------------
// Printing

impl fmt::Display for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Index::Lit(i) => write!(f, "{i}"),
            Index::Bound {
                var,
                component: None,
            } => f.write_str(var),
            Index::Bound {
                var,
                component: Some(c),
            } => write!(f, "{var}.{c}"),
        }
    }
}

impl Expr {
    fn is_additive(&self) -> bool {
        matches!(self, Expr::Add(..) | Expr::Sub(..))
    }
}

fn paren_if(f: &mut fmt::Formatter<'_>, wrap: bool, inner: &dyn fmt::Display) -> fmt::Result {
    if wrap {
        write!(f, "({inner})")
    } else {
        write!(f, "{inner}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Output(i) => write!(f, "out[{i}]"),
            Expr::Input(i) => write!(f, "in[{i}]"),
            Expr::Sum(items) => {
                f.write_str("sum(")?;
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let sym = if matches!(self, Expr::Add(..)) { "+" } else { "-" };
                write!(f, "{a} {sym} ")?;
                paren_if(f, b.is_additive(), b)
            }
            Expr::Mul(a, b) => {
                paren_if(f, a.is_additive(), a)?;
                f.write_str(" * ")?;
                paren_if(f, b.is_additive() || matches!(**b, Expr::Mul(..)), b)
            }
            Expr::Norm2Diff(a, b) => write!(f, "norm2({} - {})", a.keyword(), b.keyword()),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let atomic = |g: &Formula| matches!(g, Formula::Cmp(..) | Formula::Not(..));
        match self {
            Formula::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
            Formula::And(a, b) => {
                paren_if(f, !(atomic(a) || matches!(**a, Formula::And(..))), a)?;
                f.write_str(" and ")?;
                paren_if(f, !atomic(b), b)
            }
            Formula::Or(a, b) => {
                paren_if(f, !(atomic(a) || matches!(**a, Formula::Or(..))), a)?;
                f.write_str(" or ")?;
                paren_if(f, !atomic(b), b)
            }
            Formula::Implies(a, b) => {
                let simple = |g: &Formula| {
                    atomic(g) || matches!(g, Formula::And(..) | Formula::Or(..))
                };
                paren_if(f, !simple(a), a)?;
                f.write_str(" -> ")?;
                paren_if(f, !simple(b), b)
            }
            Formula::Not(a) => {
                f.write_str("not ")?;
                paren_if(f, !atomic(a), a)
            }
            Formula::BigAnd { var, set, body } => {
                write!(f, "forall {var} in {}: {body}", set.name)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    #[test]
    fn push_negations_examples() {
        let x = Expr::output(0);
        let y = Expr::output(1);
        let f = Formula::not(Formula::cmp(CmpOp::Le, x.clone(), y.clone()));
        assert_eq!(
            push_negations(&f),
            Formula::cmp(CmpOp::Lt, y.clone(), x.clone())
        );

        let a = Formula::cmp(CmpOp::Ge, x.clone(), c(0.1));
        let b = Formula::cmp(CmpOp::Eq, x.clone(), y.clone());
        assert_eq!(
            push_negations(&Formula::not(Formula::not(a.clone()))),
            a.clone()
        );

        let nand = Formula::not(Formula::and(a.clone(), b.clone()));
        assert_eq!(
            push_negations(&nand),
            Formula::or(
                Formula::cmp(CmpOp::Lt, x.clone(), c(0.1)),
                Formula::cmp(CmpOp::Ne, x.clone(), y.clone())
            )
        );
        assert!(!push_negations(&nand).contains_not());
    }

    #[test]
    fn negated_quantifier_is_expanded() {
        let set = BindingSet::new("S", vec![vec![0], vec![2]]).unwrap();
        let body = Formula::cmp(
            CmpOp::Le,
            Expr::Output(Index::Bound {
                var: "s".into(),
                component: Some(0),
            }),
            c(0.5),
        );
        let f = Formula::not(Formula::big_and("s", set, body));
        let pushed = push_negations(&f);
        assert_eq!(
            pushed,
            Formula::or(
                Formula::cmp(CmpOp::Lt, c(0.5), Expr::output(0)),
                Formula::cmp(CmpOp::Lt, c(0.5), Expr::output(2)),
            )
        );
    }

    #[test]
    fn eval_crisp_examples() {
        let env = Env::new(&[]);
        assert!(eval_crisp(&Formula::cmp(CmpOp::Le, c(3.0), c(5.0)), &env).unwrap());
        let vacuous = Formula::implies(
            Formula::cmp(CmpOp::Le, c(5.0), c(3.0)),
            Formula::cmp(CmpOp::Le, c(9.0), c(1.0)),
        );
        assert!(eval_crisp(&vacuous, &env).unwrap());
        // ties make strict comparison false
        assert!(!eval_crisp(&Formula::cmp(CmpOp::Lt, c(2.0), c(2.0)), &env).unwrap());

        // group mass 0.98 with eps 0.05
        let outs = [0.5, 0.48, 0.02];
        let mass = Expr::Sum(vec![Expr::output(0), Expr::output(1)]);
        let eps = 0.05;
        let g = Formula::or(
            Formula::cmp(CmpOp::Le, mass.clone(), c(eps)),
            Formula::cmp(
                CmpOp::Ge,
                mass,
                Expr::Sub(Box::new(c(1.0)), Box::new(c(eps))),
            ),
        );
        assert!(eval_crisp(&g, &Env::new(&outs)).unwrap());
    }

    #[test]
    fn eval_crisp_unbound() {
        let f = Formula::cmp(CmpOp::Le, Expr::output(3), c(1.0));
        assert!(matches!(
            eval_crisp(&f, &Env::new(&[0.1, 0.2])),
            Err(FormulaError::UnboundReference { index: 3, .. })
        ));
        let g = Formula::cmp(
            CmpOp::Le,
            Expr::Norm2Diff(VecRef::Output, VecRef::PairOutput),
            c(1.0),
        );
        assert!(matches!(
            eval_crisp(&g, &Env::new(&[0.1])),
            Err(FormulaError::MissingPair(_))
        ));
    }

    #[test]
    fn expansion_folds_left() {
        let set = BindingSet::new("T", vec![vec![0, 1], vec![1, 2], vec![2, 0]]).unwrap();
        let v = |k| Index::Bound {
            var: "t".into(),
            component: Some(k),
        };
        let body = Formula::cmp(CmpOp::Ge, Expr::Output(v(0)), Expr::Output(v(1)));
        let e = Formula::big_and("t", set, body).expand().unwrap();
        let atom = |a, b| Formula::cmp(CmpOp::Ge, Expr::output(a), Expr::output(b));
        assert_eq!(
            e,
            Formula::and(Formula::and(atom(0, 1), atom(1, 2)), atom(2, 0))
        );
    }

    #[test]
    fn expansion_errors() {
        let set = BindingSet::new("T", vec![vec![0, 1]]).unwrap();
        let body = Formula::cmp(
            CmpOp::Ge,
            Expr::Output(Index::Bound {
                var: "t".into(),
                component: Some(2),
            }),
            c(0.0),
        );
        assert!(matches!(
            Formula::big_and("t", set.clone(), body).expand(),
            Err(FormulaError::ComponentOutOfRange { .. })
        ));
        let body = Formula::cmp(
            CmpOp::Ge,
            Expr::Output(Index::Bound {
                var: "t".into(),
                component: None,
            }),
            c(0.0),
        );
        assert!(matches!(
            Formula::big_and("t", set, body).expand(),
            Err(FormulaError::TupleOutsideSum(_))
        ));
        assert!(BindingSet::new("E", vec![]).is_err());
    }
}
