//! Random formulas and environments shared by the integration tests.
#![allow(dead_code)]

use difflogic::formula::{CmpOp, Expr, Formula, Index};
use rand::Rng;

/// Random value on the quarter grid in `[lo, hi]`, so sums and differences
/// are exact and ties are common.
pub fn grid_value(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let steps = ((hi - lo) * 4.0).round() as i64;
    lo + rng.random_range(0..=steps) as f64 * 0.25
}

pub fn random_expr(rng: &mut impl Rng, n_out: usize, depth: usize) -> Expr {
    let leaf = depth == 0 || rng.random_bool(0.6);
    if leaf {
        if rng.random_bool(0.7) {
            Expr::Output(Index::Lit(rng.random_range(0..n_out)))
        } else {
            Expr::Const(grid_value(rng, -1.0, 1.0))
        }
    } else {
        let a = Box::new(random_expr(rng, n_out, depth - 1));
        let b = Box::new(random_expr(rng, n_out, depth - 1));
        if rng.random_bool(0.5) {
            Expr::Add(a, b)
        } else {
            Expr::Sub(a, b)
        }
    }
}

/// Formula of connective depth at most `depth` over `out[0..n_out]`.
pub fn random_formula(rng: &mut impl Rng, n_out: usize, depth: usize) -> Formula {
    if depth == 0 || rng.random_bool(0.25) {
        let op = CmpOp::ALL[rng.random_range(0..CmpOp::ALL.len())];
        return Formula::Cmp(op, random_expr(rng, n_out, 1), random_expr(rng, n_out, 1));
    }
    let a = random_formula(rng, n_out, depth - 1);
    match rng.random_range(0..4) {
        0 => Formula::and(a, random_formula(rng, n_out, depth - 1)),
        1 => Formula::or(a, random_formula(rng, n_out, depth - 1)),
        2 => Formula::implies(a, random_formula(rng, n_out, depth - 1)),
        _ => Formula::not(a),
    }
}

pub fn random_outputs(rng: &mut impl Rng, n_out: usize) -> Vec<f64> {
    (0..n_out).map(|_| grid_value(rng, 0.0, 1.0)).collect()
}

pub fn formula_depth(f: &Formula) -> usize {
    match f {
        Formula::Cmp(..) => 0,
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            1 + formula_depth(a).max(formula_depth(b))
        }
        Formula::Not(a) => 1 + formula_depth(a),
        Formula::BigAnd { body, .. } => 1 + formula_depth(body),
    }
}
