//! Loss semantics for formulas: DL2 and a family of fuzzy logics.
//!
//! DL2 maps truth to a loss of 0 and violation to a positive value. Fuzzy
//! logics map truth to 1 within `[0, 1]`; their loss is `1 - truth`.
//!
//! Every operator is generic over [`Arith`], so the same code evaluates on
//! plain floats and records on a [`Tape`](crate::autodiff::Tape).

use std::fmt;

use thiserror::Error;

use crate::autodiff::{Arith, DomainError};
use crate::formula::{push_negations, CmpOp, Env, Formula, FormulaError};

pub const DEFAULT_XI: f64 = 1.0;
pub const DEFAULT_YAGER_P: f64 = 2.0;
pub const DEFAULT_SIGMOIDAL_S: f64 = 9.0;
pub const DEFAULT_COMPARISON_EPS: f64 = 0.05;

/// Every backend name accepted by [`LogicBackend::from_name`].
pub const BACKEND_NAMES: [&str; 13] = [
    "dl2", "godel", "kd", "lk", "gg", "rc", "rc-s", "rc-phi", "yg", "tg", "tlk", "trc", "tyg",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TNorm {
    Godel,
    Lukasiewicz,
    Yager,
    Product,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SNorm {
    Godel,
    Lukasiewicz,
    Yager,
    ProbabilisticSum,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Implication {
    Godel,
    KleeneDienes,
    Lukasiewicz,
    Yager,
    Goguen,
    Reichenbach,
}

impl TNorm {
    pub const ALL: [TNorm; 4] = [TNorm::Godel, TNorm::Lukasiewicz, TNorm::Yager, TNorm::Product];

    /// The t-conorm obtained by `S(x, y) = 1 - T(1 - x, 1 - y)`.
    pub fn dual(self) -> SNorm {
        match self {
            TNorm::Godel => SNorm::Godel,
            TNorm::Lukasiewicz => SNorm::Lukasiewicz,
            TNorm::Yager => SNorm::Yager,
            TNorm::Product => SNorm::ProbabilisticSum,
        }
    }
}

impl Implication {
    pub const ALL: [Implication; 6] = [
        Implication::Godel,
        Implication::KleeneDienes,
        Implication::Lukasiewicz,
        Implication::Yager,
        Implication::Goguen,
        Implication::Reichenbach,
    ];
}

/// `max(0, 1 - ||(1 - x, 1 - y)||_p)` and friends. `p` is only read by Yager.
pub fn tnorm<A: Arith>(a: &mut A, family: TNorm, x: A::V, y: A::V, p: f64) -> Result<A::V, DomainError> {
    match family {
        TNorm::Godel => a.min(x, y),
        TNorm::Lukasiewicz => {
            let s = a.add(x, y)?;
            let one = a.constant(1.0);
            let d = a.sub(s, one)?;
            let zero = a.constant(0.0);
            a.max(zero, d)
        }
        TNorm::Yager => {
            let nx = a.complement(x)?;
            let ny = a.complement(y)?;
            let norm = pyth_sum(a, nx, ny, p)?;
            let t = a.complement(norm)?;
            let zero = a.constant(0.0);
            a.max(zero, t)
        }
        TNorm::Product => a.mul(x, y),
    }
}

pub fn snorm<A: Arith>(a: &mut A, family: SNorm, x: A::V, y: A::V, p: f64) -> Result<A::V, DomainError> {
    match family {
        SNorm::Godel => a.max(x, y),
        SNorm::Lukasiewicz => {
            let s = a.add(x, y)?;
            let one = a.constant(1.0);
            a.min(one, s)
        }
        SNorm::Yager => {
            let norm = pyth_sum(a, x, y, p)?;
            let one = a.constant(1.0);
            a.min(one, norm)
        }
        SNorm::ProbabilisticSum => {
            let s = a.add(x, y)?;
            let m = a.mul(x, y)?;
            a.sub(s, m)
        }
    }
}

/// p-norm Pythagorean sum `(|u|^p + |v|^p)^(1/p)`.
fn pyth_sum<A: Arith>(a: &mut A, u: A::V, v: A::V, p: f64) -> Result<A::V, DomainError> {
    let au = a.abs(u)?;
    let av = a.abs(v)?;
    if p == 2.0 {
        let u2 = a.mul(au, au)?;
        let v2 = a.mul(av, av)?;
        let s = a.add(u2, v2)?;
        return a.sqrt(s);
    }
    let pc = a.constant(p);
    let up = a.pow(au, pc)?;
    let vp = a.pow(av, pc)?;
    let s = a.add(up, vp)?;
    let inv = a.constant(1.0 / p);
    a.pow(s, inv)
}

/// The six implications. Gödel and Goguen use the branch `x <= y`.
pub fn implication<A: Arith>(a: &mut A, kind: Implication, x: A::V, y: A::V) -> Result<A::V, DomainError> {
    match kind {
        Implication::Godel => {
            let (xv, yv) = (a.value(x), a.value(y));
            a.note_branch(xv, yv);
            if xv <= yv {
                Ok(a.constant(1.0))
            } else {
                Ok(y)
            }
        }
        Implication::KleeneDienes => {
            let nx = a.complement(x)?;
            a.max(nx, y)
        }
        Implication::Lukasiewicz => {
            let nx = a.complement(x)?;
            let s = a.add(nx, y)?;
            let one = a.constant(1.0);
            a.min(s, one)
        }
        // y^x, with pow(0, 0) = 1 covering the x = y = 0 case.
        Implication::Yager => a.pow(y, x),
        Implication::Goguen => {
            let (xv, yv) = (a.value(x), a.value(y));
            a.note_branch(xv, yv);
            if xv <= yv {
                Ok(a.constant(1.0))
            } else {
                a.div(y, x)
            }
        }
        Implication::Reichenbach => {
            let nx = a.complement(x)?;
            let xy = a.mul(x, y)?;
            a.add(nx, xy)
        }
    }
}

/// Rescaled sigmoid of a truth value with steepness `s`; fixes 0 and 1.
pub fn sigmoidal_transform<A: Arith>(a: &mut A, i: A::V, s: f64) -> Result<A::V, DomainError> {
    let e = (s / 2.0).exp();
    let sc = a.constant(s);
    let scaled = a.mul(sc, i)?;
    let half = a.constant(s / 2.0);
    let shifted = a.sub(scaled, half)?;
    let sig = a.sigmoid(shifted)?;
    let k = a.constant(1.0 + e);
    let num = a.mul(k, sig)?;
    let one = a.constant(1.0);
    let num = a.sub(num, one)?;
    let den = a.constant(e - 1.0);
    a.div(num, den)
}

/// Increasing bijection of `[0, 1]` used to reshape an implication.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bijection {
    /// `x^k` for `k > 0`.
    Power(f64),
}

impl Bijection {
    pub const SQUARE: Bijection = Bijection::Power(2.0);

    fn forward<A: Arith>(self, a: &mut A, x: A::V) -> Result<A::V, DomainError> {
        match self {
            Bijection::Power(k) if k == 2.0 => a.mul(x, x),
            Bijection::Power(k) => {
                let kc = a.constant(k);
                a.pow(x, kc)
            }
        }
    }

    fn inverse<A: Arith>(self, a: &mut A, x: A::V) -> Result<A::V, DomainError> {
        match self {
            Bijection::Power(k) if k == 2.0 => a.sqrt(x),
            Bijection::Power(k) => {
                let kc = a.constant(1.0 / k);
                a.pow(x, kc)
            }
        }
    }
}

/// `phi^-1(I(phi(x), phi(y)))`
pub fn phi_transform<A: Arith>(
    a: &mut A,
    kind: Implication,
    phi: Bijection,
    x: A::V,
    y: A::V,
) -> Result<A::V, DomainError> {
    let px = phi.forward(a, x)?;
    let py = phi.forward(a, y)?;
    let i = implication(a, kind, px, py)?;
    phi.inverse(a, i)
}

/// Truth of `x <= y` on arbitrary reals: `1 - max(x - y, 0) / (|x| + |y| + eps)`.
pub fn fuzzy_compare_le<A: Arith>(a: &mut A, x: A::V, y: A::V, eps: f64) -> Result<A::V, DomainError> {
    let d = a.sub(x, y)?;
    let zero = a.constant(0.0);
    let num = a.max(d, zero)?;
    let ax = a.abs(x)?;
    let ay = a.abs(y)?;
    let s = a.add(ax, ay)?;
    let ec = a.constant(eps);
    let den = a.add(s, ec)?;
    if a.value(den) == 0.0 {
        // Only reachable with eps = 0 and x = y = 0.
        return Ok(a.constant(1.0));
    }
    let q = a.div(num, den)?;
    a.complement(q)
}

/// DL2 loss of a single comparison.
pub fn dl2_atom<A: Arith>(a: &mut A, op: CmpOp, x: A::V, y: A::V, xi: f64) -> Result<A::V, DomainError> {
    match op {
        CmpOp::Le => {
            let d = a.sub(x, y)?;
            let zero = a.constant(0.0);
            a.max(d, zero)
        }
        CmpOp::Ne => {
            let (xv, yv) = (a.value(x), a.value(y));
            a.note_branch(xv, yv);
            Ok(a.constant(if xv == yv { xi } else { 0.0 }))
        }
        CmpOp::Lt => {
            let le = dl2_atom(a, CmpOp::Le, x, y, xi)?;
            let ne = dl2_atom(a, CmpOp::Ne, x, y, xi)?;
            a.add(le, ne)
        }
        CmpOp::Ge => dl2_atom(a, CmpOp::Le, y, x, xi),
        CmpOp::Gt => dl2_atom(a, CmpOp::Lt, y, x, xi),
        CmpOp::Eq => {
            let l = dl2_atom(a, CmpOp::Le, x, y, xi)?;
            let r = dl2_atom(a, CmpOp::Le, y, x, xi)?;
            a.add(l, r)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connective {
    And,
    Or,
}

/// DL2 conjunction is a sum of losses, disjunction a product.
pub fn dl2_connective<A: Arith>(a: &mut A, kind: Connective, x: A::V, y: A::V) -> Result<A::V, DomainError> {
    match kind {
        Connective::And => a.add(x, y),
        Connective::Or => a.mul(x, y),
    }
}

/// Post-processing applied to the implication only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Transform {
    None,
    Sigmoidal { s: f64 },
    Phi(Bijection),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FuzzyLogic {
    pub conjunction: TNorm,
    pub disjunction: SNorm,
    pub implication: Implication,
    pub transform: Transform,
    pub yager_p: f64,
    /// Denominator offset of the comparison mapping.
    pub eps: f64,
}

impl FuzzyLogic {
    pub fn and<A: Arith>(&self, a: &mut A, x: A::V, y: A::V) -> Result<A::V, DomainError> {
        tnorm(a, self.conjunction, x, y, self.yager_p)
    }

    pub fn or<A: Arith>(&self, a: &mut A, x: A::V, y: A::V) -> Result<A::V, DomainError> {
        snorm(a, self.disjunction, x, y, self.yager_p)
    }

    pub fn implies<A: Arith>(&self, a: &mut A, x: A::V, y: A::V) -> Result<A::V, DomainError> {
        match self.transform {
            Transform::None => implication(a, self.implication, x, y),
            Transform::Sigmoidal { s } => {
                let i = implication(a, self.implication, x, y)?;
                sigmoidal_transform(a, i, s)
            }
            Transform::Phi(phi) => phi_transform(a, self.implication, phi, x, y),
        }
    }

    pub fn compare<A: Arith>(&self, a: &mut A, op: CmpOp, x: A::V, y: A::V) -> Result<A::V, DomainError> {
        match op {
            // Strictness has no fuzzy counterpart.
            CmpOp::Le | CmpOp::Lt => fuzzy_compare_le(a, x, y, self.eps),
            CmpOp::Ge | CmpOp::Gt => fuzzy_compare_le(a, y, x, self.eps),
            CmpOp::Eq => {
                let l = fuzzy_compare_le(a, x, y, self.eps)?;
                let r = fuzzy_compare_le(a, y, x, self.eps)?;
                self.and(a, l, r)
            }
            CmpOp::Ne => {
                let eq = self.compare(a, CmpOp::Eq, x, y)?;
                a.complement(eq)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Semantics {
    Dl2 { xi: f64 },
    Fuzzy(FuzzyLogic),
}

/// Whether zero or one means "satisfied".
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    /// DL2: loss is 0 when true, positive otherwise.
    LossZeroWhenTrue,
    /// Fuzzy: truth is 1 when true; loss is `1 - truth`.
    TruthOneWhenTrue,
}

/// Tunable constants shared by the backends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogicParams {
    pub xi: f64,
    pub yager_p: f64,
    pub sigmoidal_s: f64,
    pub eps: f64,
}

impl Default for LogicParams {
    fn default() -> Self {
        LogicParams {
            xi: DEFAULT_XI,
            yager_p: DEFAULT_YAGER_P,
            sigmoidal_s: DEFAULT_SIGMOIDAL_S,
            eps: DEFAULT_COMPARISON_EPS,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogicError {
    #[error("unknown logic `{name}`; valid options: {}", BACKEND_NAMES.join(", "))]
    UnknownBackend { name: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A named semantics.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicBackend {
    name: &'static str,
    pub semantics: Semantics,
}

impl LogicBackend {
    pub fn from_name(name: &str, params: &LogicParams) -> Result<LogicBackend, LogicError> {
        if !(params.xi > 0.0) {
            return Err(LogicError::InvalidParameter(format!("xi must be > 0, got {}", params.xi)));
        }
        if !(params.yager_p >= 1.0) {
            return Err(LogicError::InvalidParameter(format!(
                "yager p must be >= 1, got {}",
                params.yager_p
            )));
        }
        if !(params.sigmoidal_s > 0.0) {
            return Err(LogicError::InvalidParameter(format!(
                "sigmoidal s must be > 0, got {}",
                params.sigmoidal_s
            )));
        }
        if !(params.eps >= 0.0) {
            return Err(LogicError::InvalidParameter(format!(
                "comparison eps must be >= 0, got {}",
                params.eps
            )));
        }
        let name = if name == "g" { "godel" } else { name };
        let canonical = *BACKEND_NAMES
            .iter()
            .find(|n| **n == name)
            .ok_or_else(|| LogicError::UnknownBackend { name: name.to_string() })?;

        if canonical == "dl2" {
            return Ok(LogicBackend {
                name: canonical,
                semantics: Semantics::Dl2 { xi: params.xi },
            });
        }

        use Implication as I;
        let fuzzy = |conjunction, disjunction, implication, transform| FuzzyLogic {
            conjunction,
            disjunction,
            implication,
            transform,
            yager_p: params.yager_p,
            eps: params.eps,
        };
        // Implication backends conjoin with the product t-norm; the t* backends
        // vary the conjunction and disjoin with the probabilistic sum.
        let logic = match canonical {
            "godel" => fuzzy(TNorm::Product, SNorm::Godel, I::Godel, Transform::None),
            "kd" => fuzzy(TNorm::Product, SNorm::Godel, I::KleeneDienes, Transform::None),
            "lk" => fuzzy(TNorm::Product, SNorm::Lukasiewicz, I::Lukasiewicz, Transform::None),
            "gg" => fuzzy(TNorm::Product, SNorm::ProbabilisticSum, I::Goguen, Transform::None),
            "rc" => fuzzy(TNorm::Product, SNorm::ProbabilisticSum, I::Reichenbach, Transform::None),
            "rc-s" => fuzzy(
                TNorm::Product,
                SNorm::ProbabilisticSum,
                I::Reichenbach,
                Transform::Sigmoidal { s: params.sigmoidal_s },
            ),
            "rc-phi" => fuzzy(
                TNorm::Product,
                SNorm::ProbabilisticSum,
                I::Reichenbach,
                Transform::Phi(Bijection::SQUARE),
            ),
            "yg" => fuzzy(TNorm::Product, SNorm::Yager, I::Yager, Transform::None),
            "tg" => fuzzy(TNorm::Godel, SNorm::ProbabilisticSum, I::Godel, Transform::None),
            "tlk" => fuzzy(TNorm::Lukasiewicz, SNorm::ProbabilisticSum, I::Lukasiewicz, Transform::None),
            "trc" => fuzzy(TNorm::Product, SNorm::ProbabilisticSum, I::Reichenbach, Transform::None),
            "tyg" => fuzzy(TNorm::Yager, SNorm::ProbabilisticSum, I::Yager, Transform::None),
            _ => unreachable!("every registered name is handled"),
        };
        Ok(LogicBackend {
            name: canonical,
            semantics: Semantics::Fuzzy(logic),
        })
    }

    /// Every registered backend with default parameters.
    pub fn all(params: &LogicParams) -> Vec<LogicBackend> {
        BACKEND_NAMES
            .iter()
            .map(|n| LogicBackend::from_name(n, params).expect("registered backend"))
            .collect()
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn is_fuzzy(&self) -> bool {
        matches!(self.semantics, Semantics::Fuzzy(_))
    }

    pub fn polarity(&self) -> Polarity {
        match self.semantics {
            Semantics::Dl2 { .. } => Polarity::LossZeroWhenTrue,
            Semantics::Fuzzy(_) => Polarity::TruthOneWhenTrue,
        }
    }

    /// Puts `f` into the shape [`compile`] expects for this backend:
    /// quantifiers expanded, and for DL2 negations pushed to the atoms.
    pub fn prepare(&self, f: &Formula) -> Result<Formula, FormulaError> {
        let expanded = f.expand()?;
        Ok(match self.semantics {
            Semantics::Dl2 { .. } => push_negations(&expanded),
            Semantics::Fuzzy(_) => expanded,
        })
    }
}

impl fmt::Display for LogicBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

/// A compiled loss together with its polarity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue<V> {
    pub loss: V,
    /// Fuzzy truth value; `None` for DL2.
    pub truth: Option<V>,
    pub polarity: Polarity,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompileError {
    #[error("DL2 has no native negation; push negations to the comparisons first (push_negations)")]
    NegationNotPushed,
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Compiles `f` into a loss under `backend`, with atoms reading from `env`.
///
/// Quantifiers are expanded (left fold under conjunction). DL2 requires
/// negations to have been pushed to the comparisons.
pub fn compile<A: Arith>(
    arith: &mut A,
    f: &Formula,
    backend: &LogicBackend,
    env: &Env<'_, A::V>,
) -> Result<LossValue<A::V>, CompileError> {
    let expanded;
    let f = if f.contains_quantifier() {
        expanded = f.expand()?;
        &expanded
    } else {
        f
    };
    match &backend.semantics {
        Semantics::Dl2 { xi } => {
            if f.contains_not() {
                return Err(CompileError::NegationNotPushed);
            }
            let loss = dl2_loss(arith, f, *xi, env)?;
            Ok(LossValue {
                loss,
                truth: None,
                polarity: Polarity::LossZeroWhenTrue,
            })
        }
        Semantics::Fuzzy(logic) => {
            let truth = fuzzy_truth(arith, f, logic, env)?;
            let loss = arith.complement(truth)?;
            Ok(LossValue {
                loss,
                truth: Some(truth),
                polarity: Polarity::TruthOneWhenTrue,
            })
        }
    }
}

fn dl2_loss<A: Arith>(a: &mut A, f: &Formula, xi: f64, env: &Env<'_, A::V>) -> Result<A::V, CompileError> {
    Ok(match f {
        Formula::Cmp(op, l, r) => {
            let x = l.evaluate(a, env)?;
            let y = r.evaluate(a, env)?;
            dl2_atom(a, *op, x, y, xi)?
        }
        Formula::And(l, r) => {
            let (x, y) = (dl2_loss(a, l, xi, env)?, dl2_loss(a, r, xi, env)?);
            dl2_connective(a, Connective::And, x, y)?
        }
        Formula::Or(l, r) => {
            let (x, y) = (dl2_loss(a, l, xi, env)?, dl2_loss(a, r, xi, env)?);
            dl2_connective(a, Connective::Or, x, y)?
        }
        Formula::Implies(l, r) => {
            // a -> b  ==  not a or b
            let neg = push_negations(&Formula::Not(l.clone()));
            let (x, y) = (dl2_loss(a, &neg, xi, env)?, dl2_loss(a, r, xi, env)?);
            dl2_connective(a, Connective::Or, x, y)?
        }
        Formula::Not(_) => return Err(CompileError::NegationNotPushed),
        Formula::BigAnd { .. } => dl2_loss(a, &f.expand()?, xi, env)?,
    })
}

fn fuzzy_truth<A: Arith>(
    a: &mut A,
    f: &Formula,
    logic: &FuzzyLogic,
    env: &Env<'_, A::V>,
) -> Result<A::V, CompileError> {
    Ok(match f {
        Formula::Cmp(op, l, r) => {
            let x = l.evaluate(a, env)?;
            let y = r.evaluate(a, env)?;
            logic.compare(a, *op, x, y)?
        }
        Formula::And(l, r) => {
            let (x, y) = (fuzzy_truth(a, l, logic, env)?, fuzzy_truth(a, r, logic, env)?);
            logic.and(a, x, y)?
        }
        Formula::Or(l, r) => {
            let (x, y) = (fuzzy_truth(a, l, logic, env)?, fuzzy_truth(a, r, logic, env)?);
            logic.or(a, x, y)?
        }
        Formula::Implies(l, r) => {
            let (x, y) = (fuzzy_truth(a, l, logic, env)?, fuzzy_truth(a, r, logic, env)?);
            logic.implies(a, x, y)?
        }
        Formula::Not(inner) => {
            let x = fuzzy_truth(a, inner, logic, env)?;
            a.complement(x)?
        }
        Formula::BigAnd { .. } => fuzzy_truth(a, &f.expand()?, logic, env)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Plain, Tape};
    use crate::formula::{parse, ParseContext};

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn dl2_atom_examples() {
        let p = &mut Plain;
        assert_eq!(dl2_atom(p, CmpOp::Le, 3.0, 5.0, 1.0).unwrap(), 0.0);
        assert_eq!(dl2_atom(p, CmpOp::Le, 5.0, 3.0, 1.0).unwrap(), 2.0);
        assert_eq!(dl2_atom(p, CmpOp::Ne, 4.0, 4.0, 1.0).unwrap(), 1.0);
        assert_eq!(dl2_atom(p, CmpOp::Ne, 4.0, 4.5, 1.0).unwrap(), 0.0);
        assert_eq!(dl2_atom(p, CmpOp::Lt, 4.0, 4.0, 1.0).unwrap(), 1.0);
        assert_eq!(dl2_atom(p, CmpOp::Gt, 1.0, 3.0, 1.0).unwrap(), 2.0);
        assert_eq!(dl2_atom(p, CmpOp::Eq, 1.0, 3.0, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn dl2_connective_examples() {
        let p = &mut Plain;
        assert_eq!(dl2_connective(p, Connective::And, 0.5, 1.5).unwrap(), 2.0);
        assert_eq!(dl2_connective(p, Connective::Or, 0.5, 0.0).unwrap(), 0.0);
        assert_eq!(dl2_connective(p, Connective::Or, 0.5, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn fuzzy_compare_examples() {
        let p = &mut Plain;
        assert_eq!(fuzzy_compare_le(p, 3.0, 5.0, 0.05).unwrap(), 1.0);
        close(fuzzy_compare_le(p, 21.0, 20.0, 0.05).unwrap(), 1.0 - 1.0 / 41.05, 1e-15);
        close(
            fuzzy_compare_le(p, 21000.0, 20000.0, 0.05).unwrap(),
            1.0 - 1000.0 / 41000.05,
            1e-15,
        );
        close(fuzzy_compare_le(p, 21.0, 20.0, 0.05).unwrap(), 0.975639, 1e-6);
        close(fuzzy_compare_le(p, 21000.0, 20000.0, 0.05).unwrap(), 0.975609, 1e-6);
        assert_eq!(fuzzy_compare_le(p, 0.0, 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn tnorm_examples() {
        let p = &mut Plain;
        assert_eq!(tnorm(p, TNorm::Godel, 0.1, 1.0, 2.0).unwrap(), 0.1);
        assert_eq!(tnorm(p, TNorm::Godel, 0.1, 0.2, 2.0).unwrap(), 0.1);
        close(tnorm(p, TNorm::Lukasiewicz, 0.7, 0.5, 2.0).unwrap(), 0.2, 1e-15);
        for y in [0.0, 0.25, 1.0] {
            close(tnorm(p, TNorm::Yager, 1.0, y, 2.0).unwrap(), y, 1e-15);
        }
    }

    #[test]
    fn snorm_examples() {
        let p = &mut Plain;
        close(snorm(p, SNorm::Yager, 0.3, 0.4, 2.0).unwrap(), 0.5, 1e-15);
        assert_eq!(snorm(p, SNorm::ProbabilisticSum, 0.5, 0.5, 2.0).unwrap(), 0.75);
        for s in [SNorm::Godel, SNorm::Lukasiewicz, SNorm::Yager, SNorm::ProbabilisticSum] {
            close(snorm(p, s, 0.0, 0.37, 2.0).unwrap(), 0.37, 1e-15);
        }
    }

    #[test]
    fn implication_examples() {
        let p = &mut Plain;
        assert_eq!(implication(p, Implication::Reichenbach, 0.5, 0.5).unwrap(), 0.75);
        assert_eq!(implication(p, Implication::Yager, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(implication(p, Implication::Goguen, 0.8, 0.4).unwrap(), 0.5);
        assert_eq!(implication(p, Implication::Godel, 0.8, 0.4).unwrap(), 0.4);
        assert_eq!(implication(p, Implication::Godel, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(implication(p, Implication::KleeneDienes, 0.8, 0.4).unwrap(), 0.4);
        close(implication(p, Implication::Lukasiewicz, 0.8, 0.4).unwrap(), 0.6, 1e-15);
    }

    #[test]
    fn sigmoidal_examples() {
        let p = &mut Plain;
        close(sigmoidal_transform(p, 0.0, 9.0).unwrap(), 0.0, 1e-12);
        close(sigmoidal_transform(p, 1.0, 9.0).unwrap(), 1.0, 1e-12);
        close(sigmoidal_transform(p, 0.5, 9.0).unwrap(), 0.5, 1e-12);
        let lo = sigmoidal_transform(p, 0.3, 9.0).unwrap();
        let hi = sigmoidal_transform(p, 0.7, 9.0).unwrap();
        assert!(lo < hi);
    }

    #[test]
    fn phi_examples() {
        let p = &mut Plain;
        let sq = Bijection::SQUARE;
        close(
            phi_transform(p, Implication::Reichenbach, sq, 0.5, 0.5).unwrap(),
            0.8125f64.sqrt(),
            1e-15,
        );
        close(0.8125f64.sqrt(), 0.9014, 1e-4);
        for y in [0.0, 0.3, 1.0] {
            close(phi_transform(p, Implication::Reichenbach, sq, 0.0, y).unwrap(), 1.0, 1e-15);
            close(phi_transform(p, Implication::Reichenbach, sq, 1.0, y).unwrap(), y, 1e-15);
        }
        let cube = Bijection::Power(3.0);
        close(
            phi_transform(p, Implication::Reichenbach, cube, 1.0, 0.4).unwrap(),
            0.4,
            1e-12,
        );
    }

    #[test]
    fn registry() {
        let params = LogicParams::default();
        for name in BACKEND_NAMES {
            let b = LogicBackend::from_name(name, &params).unwrap();
            assert_eq!(b.name(), name);
        }
        assert_eq!(LogicBackend::from_name("g", &params).unwrap().name(), "godel");
        let err = LogicBackend::from_name("zadeh", &params).unwrap_err();
        assert!(err.to_string().contains("rc-phi"));
        let bad = LogicParams {
            yager_p: 0.5,
            ..params
        };
        assert!(LogicBackend::from_name("yg", &bad).is_err());
        assert_eq!(
            LogicBackend::from_name("dl2", &params).unwrap().polarity(),
            Polarity::LossZeroWhenTrue
        );
    }

    fn rc() -> LogicBackend {
        LogicBackend::from_name("rc", &LogicParams::default()).unwrap()
    }

    fn dl2() -> LogicBackend {
        LogicBackend::from_name("dl2", &LogicParams::default()).unwrap()
    }

    #[test]
    fn compile_examples() {
        let ctx = ParseContext::new(3);
        let f = parse("(out[0] >= 0.1) -> (out[1] >= out[2])", &ctx).unwrap();
        let outs = [0.5, 0.3, 0.2];
        let lv = compile(&mut Plain, &f, &rc(), &Env::new(&outs)).unwrap();
        assert_eq!(lv.truth, Some(1.0));
        assert_eq!(lv.loss, 0.0);

        let atom = parse("out[0] <= 0.5", &ctx).unwrap();
        let outs = [0.7, 0.3, 0.0];
        let lv = compile(&mut Plain, &atom, &dl2(), &Env::new(&outs)).unwrap();
        close(lv.loss, 0.2, 1e-15);
        let lv = compile(&mut Plain, &atom, &rc(), &Env::new(&outs)).unwrap();
        close(lv.loss, 0.2 / 1.25, 1e-15);
        close(lv.truth.unwrap(), 0.84, 1e-15);
    }

    #[test]
    fn dl2_rejects_raw_negation() {
        let f = parse("not out[0] <= 0.5", &ParseContext::new(1)).unwrap();
        let err = compile(&mut Plain, &f, &dl2(), &Env::new(&[0.7])).unwrap_err();
        assert_eq!(err, CompileError::NegationNotPushed);
        let prepared = dl2().prepare(&f).unwrap();
        let lv = compile(&mut Plain, &prepared, &dl2(), &Env::new(&[0.7])).unwrap();
        assert_eq!(lv.loss, 0.0);
        // fuzzy backends negate natively
        let lv = compile(&mut Plain, &f, &rc(), &Env::new(&[0.7])).unwrap();
        close(lv.truth.unwrap(), 0.16, 1e-15);
    }

    #[test]
    fn tape_and_plain_agree() {
        let ctx = ParseContext::new(3);
        let f = parse(
            "(out[0] >= 0.1) -> (out[1] >= out[2]) and (out[0] + out[1] == 1 or out[2] != 0)",
            &ctx,
        )
        .unwrap();
        let outs = [0.2, 0.1, 0.7];
        for backend in LogicBackend::all(&LogicParams::default()) {
            let f = backend.prepare(&f).unwrap();
            let plain = compile(&mut Plain, &f, &backend, &Env::new(&outs)).unwrap();
            let mut t = Tape::new();
            let vars: Vec<_> = outs.iter().map(|v| t.var(*v)).collect();
            let taped = compile(&mut t, &f, &backend, &Env::new(&vars)).unwrap();
            assert_eq!(plain.loss.to_bits(), t.value(taped.loss).to_bits(), "{backend}");
        }
    }

    #[test]
    fn quantifier_folds_with_backend_conjunction() {
        use crate::formula::BindingSet;
        let set = BindingSet::new("S", vec![vec![0], vec![1]]).unwrap();
        let ctx = ParseContext::new(2).with_set(set);
        let f = parse("forall s in S: out[s] <= 0.5", &ctx).unwrap();
        let outs = [0.7, 0.9];
        let lv = compile(&mut Plain, &f, &dl2(), &Env::new(&outs)).unwrap();
        close(lv.loss, 0.2 + 0.4, 1e-15);
        let t0 = 1.0 - 0.2 / 1.25;
        let t1 = 1.0 - 0.4 / 1.45;
        let lv = compile(&mut Plain, &f, &rc(), &Env::new(&outs)).unwrap();
        close(lv.truth.unwrap(), t0 * t1, 1e-15);
    }
}
