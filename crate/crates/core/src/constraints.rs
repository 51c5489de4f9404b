//! Builders for the class-similarity, group and Lipschitz constraints, and
//! the built-in label/group tables.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::formula::{BindingSet, CmpOp, Expr, Formula, FormulaError, Index, VecRef};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("empty {0} list")]
    Empty(&'static str),
    #[error("class index {index} out of range for {n_classes} classes")]
    IndexOutOfRange { index: usize, n_classes: usize },
    #[error("label triple {0} has repeated classes")]
    RepeatedLabel(LabelTriple),
    #[error("group {group:?}: {reason}")]
    BadGroup { group: String, reason: String },
    #[error("epsilon must lie in (0, 0.5), got {0}")]
    Epsilon(f64),
    #[error("Lipschitz constant must be positive and finite, got {0}")]
    Lipschitz(f64),
    #[error("unknown table {name:?}; expected one of: {}", TABLE_NAMES.join(", "))]
    UnknownTable { name: String },
    #[error("unknown class name {0:?}")]
    UnknownClass(String),
    #[error("line {line}: {reason}")]
    TableSyntax { line: usize, reason: String },
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelTriple(pub usize, pub usize, pub usize);

impl LabelTriple {
    pub fn validate(&self, n_classes: usize) -> Result<(), ConstraintError> {
        for index in [self.0, self.1, self.2] {
            if index >= n_classes {
                return Err(ConstraintError::IndexOutOfRange { index, n_classes });
            }
        }
        if self.0 == self.1 || self.1 == self.2 || self.0 == self.2 {
            return Err(ConstraintError::RepeatedLabel(*self));
        }
        Ok(())
    }
}

impl fmt::Display for LabelTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0, self.1, self.2)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassGroup {
    pub name: String,
    pub members: Vec<usize>,
}

impl ClassGroup {
    pub fn new(name: impl Into<String>, members: Vec<usize>) -> ClassGroup {
        ClassGroup {
            name: name.into(),
            members,
        }
    }
}

/// Checks that groups are non-empty, have unique members and do not overlap.
pub fn validate_groups(groups: &[ClassGroup], n_classes: Option<usize>) -> Result<(), ConstraintError> {
    if groups.is_empty() {
        return Err(ConstraintError::Empty("group"));
    }
    let mut seen = BTreeSet::new();
    for g in groups {
        if g.members.is_empty() {
            return Err(ConstraintError::BadGroup {
                group: g.name.clone(),
                reason: "no members".into(),
            });
        }
        let mut own = BTreeSet::new();
        for &m in &g.members {
            if let Some(n) = n_classes {
                if m >= n {
                    return Err(ConstraintError::IndexOutOfRange { index: m, n_classes: n });
                }
            }
            if !own.insert(m) {
                return Err(ConstraintError::BadGroup {
                    group: g.name.clone(),
                    reason: format!("class {m} listed twice"),
                });
            }
            if !seen.insert(m) {
                return Err(ConstraintError::BadGroup {
                    group: g.name.clone(),
                    reason: format!("class {m} already belongs to another group"),
                });
            }
        }
    }
    Ok(())
}

fn bound(var: &str, component: Option<usize>) -> Index {
    Index::Bound {
        var: var.to_string(),
        component,
    }
}

/// `forall t in Labels: out[t.0] >= 1/n -> out[t.1] >= out[t.2]`
pub fn csim_formula(labels: &[LabelTriple], n_classes: usize) -> Result<Formula, ConstraintError> {
    if labels.is_empty() {
        return Err(ConstraintError::Empty("label triple"));
    }
    for t in labels {
        t.validate(n_classes)?;
    }
    let set = BindingSet::new("Labels", labels.iter().map(|t| vec![t.0, t.1, t.2]).collect())?;
    let body = Formula::implies(
        Formula::cmp(
            CmpOp::Ge,
            Expr::Output(bound("t", Some(0))),
            Expr::Const(1.0 / n_classes as f64),
        ),
        Formula::cmp(
            CmpOp::Ge,
            Expr::Output(bound("t", Some(1))),
            Expr::Output(bound("t", Some(2))),
        ),
    );
    Ok(Formula::big_and("t", set, body))
}

/// `forall g in Groups: sum(out[g]) <= eps or sum(out[g]) >= 1 - eps`
pub fn group_formula(groups: &[ClassGroup], eps: f64) -> Result<Formula, ConstraintError> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(ConstraintError::Epsilon(eps));
    }
    validate_groups(groups, None)?;
    let set = BindingSet::new("Groups", groups.iter().map(|g| g.members.clone()).collect())?;
    let mass = || Expr::Sum(vec![Expr::Output(bound("g", None))]);
    let body = Formula::or(
        Formula::cmp(CmpOp::Le, mass(), Expr::Const(eps)),
        Formula::cmp(
            CmpOp::Ge,
            mass(),
            Expr::Sub(Box::new(Expr::Const(1.0)), Box::new(Expr::Const(eps))),
        ),
    );
    Ok(Formula::big_and("g", set, body))
}

/// `norm2(out - out') <= L * norm2(in - in')` over a pair of samples.
pub fn lipschitz_formula(l: f64) -> Result<Formula, ConstraintError> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(ConstraintError::Lipschitz(l));
    }
    Ok(Formula::cmp(
        CmpOp::Le,
        Expr::Norm2Diff(VecRef::Output, VecRef::PairOutput),
        Expr::Mul(
            Box::new(Expr::Const(l)),
            Box::new(Expr::Norm2Diff(VecRef::Input, VecRef::PairInput)),
        ),
    ))
}

// ---------------------------------------------------------------------------
// Built-in tables

pub const TABLE_NAMES: [&str; 4] = ["fmnist", "cifar10", "gtsrb", "synthetic"];

pub const FMNIST_CLASSES: [&str; 10] = [
    "T-shirt/top",
    "Trouser",
    "Pullover",
    "Dress",
    "Coat",
    "Sandal",
    "Shirt",
    "Sneaker",
    "Bag",
    "Ankle boot",
];

pub const CIFAR10_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Standard GTSRB class order.
pub const GTSRB_CLASSES: [&str; 43] = [
    "speed limit 20",
    "speed limit 30",
    "speed limit 50",
    "speed limit 60",
    "speed limit 70",
    "speed limit 80",
    "end of speed limit 80",
    "speed limit 100",
    "speed limit 120",
    "no passing",
    "no passing for vehicles over 3.5t",
    "right-of-way at next intersection",
    "priority road",
    "yield",
    "stop",
    "no vehicles",
    "vehicles over 3.5t prohibited",
    "no entry",
    "general caution",
    "dangerous curve left",
    "dangerous curve right",
    "double curve",
    "bumpy road",
    "slippery road",
    "road narrows on the right",
    "road work",
    "traffic signals",
    "pedestrians",
    "children crossing",
    "bicycles crossing",
    "beware of ice/snow",
    "wild animals crossing",
    "end of all speed and passing limits",
    "turn right ahead",
    "turn left ahead",
    "ahead only",
    "go straight or right",
    "go straight or left",
    "keep right",
    "keep left",
    "roundabout mandatory",
    "end of no passing",
    "end of no passing for vehicles over 3.5t",
];

const FMNIST_TRIPLES: [[&str; 3]; 10] = [
    ["T-shirt/top", "Shirt", "Ankle boot"],
    ["Trouser", "Dress", "Bag"],
    ["Pullover", "Shirt", "Sandal"],
    ["Dress", "Coat", "Bag"],
    ["Coat", "Pullover", "Shirt"],
    ["Sandal", "Sneaker", "Dress"],
    ["Shirt", "Pullover", "Sneaker"],
    ["Sneaker", "Sandal", "Trouser"],
    ["Bag", "Sandal", "Dress"],
    ["Ankle boot", "Sneaker", "T-shirt/top"],
];

const CIFAR10_TRIPLES: [[&str; 3]; 10] = [
    ["airplane", "ship", "dog"],
    ["automobile", "truck", "cat"],
    ["bird", "airplane", "dog"],
    ["cat", "dog", "frog"],
    ["deer", "horse", "truck"],
    ["dog", "cat", "bird"],
    ["frog", "ship", "truck"],
    ["horse", "deer", "airplane"],
    ["ship", "airplane", "deer"],
    ["truck", "automobile", "airplane"],
];

const GTSRB_GROUPS: [(&str, &[&str]); 4] = [
    (
        "speed limits",
        &[
            "speed limit 20",
            "speed limit 30",
            "speed limit 50",
            "speed limit 60",
            "speed limit 70",
            "speed limit 80",
            "end of speed limit 80",
            "speed limit 100",
            "speed limit 120",
        ],
    ),
    (
        "prohibitions",
        &[
            "no passing",
            "no passing for vehicles over 3.5t",
            "no vehicles",
            "no entry",
            "end of no passing",
            "end of no passing for vehicles over 3.5t",
        ],
    ),
    (
        "mandatory actions",
        &[
            "turn right ahead",
            "turn left ahead",
            "ahead only",
            "go straight or right",
            "go straight or left",
            "keep right",
            "keep left",
            "roundabout mandatory",
        ],
    ),
    (
        "warnings",
        &[
            "general caution",
            "dangerous curve left",
            "dangerous curve right",
            "double curve",
            "bumpy road",
            "slippery road",
            "road narrows on the right",
            "road work",
            "pedestrians",
            "children crossing",
            "wild animals crossing",
        ],
    ),
];

fn class_index(classes: &[&str], name: &str) -> Result<usize, ConstraintError> {
    classes
        .iter()
        .position(|c| *c == name)
        .ok_or_else(|| ConstraintError::UnknownClass(name.to_string()))
}

fn named_triples(classes: &[&str], table: &[[&str; 3]]) -> Vec<LabelTriple> {
    table
        .iter()
        .map(|[a, b, c]| {
            let ix = |n| class_index(classes, n).expect("built-in table uses known class names");
            LabelTriple(ix(a), ix(b), ix(c))
        })
        .collect()
}

/// Class-similarity triples for the synthetic ring. Classes pair up as
/// `{2k, 2k+1}`; each class must rank its partner at least as high as its
/// other ring neighbour. With an odd count the last class pairs with 0.
pub fn synthetic_triples(n_classes: usize) -> Vec<LabelTriple> {
    let next = |l: usize| (l + 1) % n_classes;
    let prev = |l: usize| (l + n_classes - 1) % n_classes;
    (0..n_classes)
        .map(|l| {
            let partner_is_next = l % 2 == 0 && l + 1 < n_classes;
            if partner_is_next {
                LabelTriple(l, next(l), prev(l))
            } else {
                LabelTriple(l, prev(l), next(l))
            }
        })
        .collect()
}

/// Groups of three consecutive classes; a trailing remainder is left out.
pub fn synthetic_groups(n_classes: usize) -> Vec<ClassGroup> {
    (0..n_classes / 3)
        .map(|g| ClassGroup::new(format!("group {g}"), (3 * g..3 * g + 3).collect()))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tables {
    Triples(Vec<LabelTriple>),
    Groups(Vec<ClassGroup>),
}

/// Class count of a built-in table's dataset.
pub fn table_classes(name: &str) -> Result<usize, ConstraintError> {
    match name {
        "fmnist" => Ok(FMNIST_CLASSES.len()),
        "cifar10" => Ok(CIFAR10_CLASSES.len()),
        "gtsrb" => Ok(GTSRB_CLASSES.len()),
        "synthetic" => Ok(10),
        _ => Err(ConstraintError::UnknownTable { name: name.into() }),
    }
}

/// Built-in tables by dataset key. `synthetic` returns the triples for ten
/// classes; use [`synthetic_triples`] or [`synthetic_groups`] for other sizes.
pub fn builtin_tables(name: &str) -> Result<Tables, ConstraintError> {
    Ok(match name {
        "fmnist" => Tables::Triples(named_triples(&FMNIST_CLASSES, &FMNIST_TRIPLES)),
        "cifar10" => Tables::Triples(named_triples(&CIFAR10_CLASSES, &CIFAR10_TRIPLES)),
        "gtsrb" => Tables::Groups(
            GTSRB_GROUPS
                .iter()
                .map(|(group, members)| {
                    let ix = members
                        .iter()
                        .map(|m| class_index(&GTSRB_CLASSES, m).expect("known GTSRB class"))
                        .collect();
                    ClassGroup::new(*group, ix)
                })
                .collect(),
        ),
        "synthetic" => Tables::Triples(synthetic_triples(10)),
        _ => return Err(ConstraintError::UnknownTable { name: name.into() }),
    })
}

/// Reads a table from text. Each non-blank line is either a triple `a b c`
/// or a group `name: i j k ...`; `#` starts a comment. A file may not mix
/// the two kinds.
pub fn parse_tables(text: &str) -> Result<Tables, ConstraintError> {
    let mut triples = Vec::new();
    let mut groups = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |reason: String| ConstraintError::TableSyntax {
            line: line_no,
            reason,
        };
        let numbers = |s: &str| -> Result<Vec<usize>, ConstraintError> {
            s.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<usize>().map_err(|_| syntax(format!("not a class index: {t:?}"))))
                .collect()
        };
        if let Some((name, rest)) = line.split_once(':') {
            let name = name.trim();
            if name.is_empty() {
                return Err(syntax("group name is empty".into()));
            }
            groups.push(ClassGroup::new(name, numbers(rest)?));
        } else {
            let v = numbers(line)?;
            if v.len() != 3 {
                return Err(syntax(format!("expected 3 class indices, found {}", v.len())));
            }
            triples.push(LabelTriple(v[0], v[1], v[2]));
        }
        if !triples.is_empty() && !groups.is_empty() {
            return Err(syntax("triples and groups cannot be mixed".into()));
        }
    }
    if !groups.is_empty() {
        validate_groups(&groups, None)?;
        Ok(Tables::Groups(groups))
    } else if !triples.is_empty() {
        Ok(Tables::Triples(triples))
    } else {
        Err(ConstraintError::Empty("table"))
    }
}

pub fn format_tables(tables: &Tables) -> String {
    let mut out = String::new();
    match tables {
        Tables::Triples(ts) => {
            for t in ts {
                out.push_str(&format!("{} {} {}\n", t.0, t.1, t.2));
            }
        }
        Tables::Groups(gs) => {
            for g in gs {
                let ms: Vec<String> = g.members.iter().map(|m| m.to_string()).collect();
                out.push_str(&format!("{}: {}\n", g.name, ms.join(" ")));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{eval_crisp, parse, Env, ParseContext};

    fn holds(f: &Formula, out: &[f64]) -> bool {
        eval_crisp(f, &Env::new(out)).unwrap()
    }

    #[test]
    fn csim_examples() {
        let f = csim_formula(&[LabelTriple(0, 1, 2)], 10).unwrap();
        let mut out = vec![0.1; 10];
        out[0] = 0.05;
        out[1] = 0.0;
        out[2] = 0.3;
        assert!(holds(&f, &out));
        let mut out = vec![0.0; 10];
        out[0] = 0.5;
        out[1] = 0.3;
        out[2] = 0.1;
        assert!(holds(&f, &out));
        out[1] = 0.1;
        out[2] = 0.3;
        assert!(!holds(&f, &out));
        assert!(csim_formula(&[], 10).is_err());
        assert!(matches!(
            csim_formula(&[LabelTriple(0, 1, 10)], 10),
            Err(ConstraintError::IndexOutOfRange { index: 10, .. })
        ));
    }

    #[test]
    fn group_examples() {
        let f = group_formula(&[ClassGroup::new("a", vec![0, 1])], 0.05).unwrap();
        assert!(holds(&f, &[0.005, 0.005, 0.99]));
        assert!(holds(&f, &[0.5, 0.47, 0.03]));
        assert!(!holds(&f, &[0.25, 0.25, 0.5]));
        assert!(group_formula(&[ClassGroup::new("a", vec![0])], 0.5).is_err());
        assert!(group_formula(&[ClassGroup::new("a", vec![0])], 0.0).is_err());
        let overlap = [ClassGroup::new("a", vec![0, 1]), ClassGroup::new("b", vec![1])];
        assert!(group_formula(&overlap, 0.05).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        let f = lipschitz_formula(1.0).unwrap();
        let x = [0.2, 0.7];
        let o = [0.1, 0.9, 0.0];
        assert!(eval_crisp(&f, &Env::new(&o).with_inputs(&x).with_pair(&o, &x)).unwrap());
        let o2 = [0.4, 0.5, 0.0];
        let x2 = [1.2, 0.7];
        assert!(eval_crisp(&f, &Env::new(&o).with_inputs(&x).with_pair(&o2, &x2)).unwrap());
        let f = lipschitz_formula(0.4).unwrap();
        assert!(!eval_crisp(&f, &Env::new(&o).with_inputs(&x).with_pair(&o2, &x2)).unwrap());
        assert!(lipschitz_formula(0.0).is_err());
    }

    #[test]
    fn builtin_table_shapes() {
        let Tables::Triples(f) = builtin_tables("fmnist").unwrap() else { panic!() };
        assert_eq!(f.len(), 10);
        assert_eq!(f[0], LabelTriple(0, 6, 9));
        let Tables::Triples(c) = builtin_tables("cifar10").unwrap() else { panic!() };
        assert_eq!(c.len(), 10);
        assert_eq!(c[9], LabelTriple(9, 1, 0));
        for t in f.iter().chain(&c) {
            t.validate(10).unwrap();
        }
        let Tables::Groups(g) = builtin_tables("gtsrb").unwrap() else { panic!() };
        let sizes: Vec<usize> = g.iter().map(|g| g.members.len()).collect();
        assert_eq!(sizes, vec![9, 6, 8, 11]);
        validate_groups(&g, Some(43)).unwrap();
        assert_eq!(g[1].members, vec![9, 10, 15, 17, 41, 42]);
        assert!(builtin_tables("mnist").is_err());
    }

    #[test]
    fn built_constraints_roundtrip() {
        let Tables::Groups(g) = builtin_tables("gtsrb").unwrap() else { panic!() };
        let formulas = [
            csim_formula(&synthetic_triples(10), 10).unwrap(),
            group_formula(&g, 0.05).unwrap(),
            lipschitz_formula(0.75).unwrap(),
        ];
        for f in formulas {
            let ctx = ParseContext::for_formula(43, &f).with_inputs(4);
            let back = parse(&f.to_string(), &ctx).unwrap();
            assert_eq!(back, f, "{f}");
        }
    }

    #[test]
    fn table_text_roundtrip() {
        for name in TABLE_NAMES {
            let t = builtin_tables(name).unwrap();
            assert_eq!(parse_tables(&format_tables(&t)).unwrap(), t);
        }
        let t = parse_tables("# comment\n0 1 2\n\n3,4,5 # trailing\n").unwrap();
        assert_eq!(t, Tables::Triples(vec![LabelTriple(0, 1, 2), LabelTriple(3, 4, 5)]));
        assert!(parse_tables("0 1\n").is_err());
        assert!(parse_tables("0 1 2\na: 3 4\n").is_err());
        assert!(parse_tables("").is_err());
    }
}
