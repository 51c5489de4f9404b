use difflogic::autodiff::{finite_diff, Arith, Plain, Tape};
use difflogic::formula::{
    eval_crisp, parse, push_negations, BindingSet, CmpOp, Env, Expr, Formula, Index, ParseContext, VecRef,
};
use difflogic::logics::{compile, implication, snorm, tnorm, Implication, LogicBackend, LogicParams, TNorm};
use proptest::prelude::*;

const N_OUT: usize = 4;
const N_IN: usize = 4;

fn set() -> BindingSet {
    BindingSet::new("S", vec![vec![0, 1], vec![2, 3], vec![1, 2]]).unwrap()
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop::sample::select(CmpOp::ALL.to_vec())
}

fn constant() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-8i32..=8).prop_map(|k| k as f64 * 0.25),
        (-1e3f64..1e3).prop_filter("finite", |x| x.is_finite()),
    ]
}

/// Expressions; `bound` allows `t.0` / `t.1` indices of the quantified tuple.
fn expr(bound: bool) -> impl Strategy<Value = Expr> {
    let index = move |n: usize| -> BoxedStrategy<Index> {
        if bound {
            prop_oneof![
                (0..n).prop_map(Index::Lit),
                (0..2usize).prop_map(|c| Index::Bound {
                    var: "t".into(),
                    component: Some(c)
                }),
            ]
            .boxed()
        } else {
            (0..n).prop_map(Index::Lit).boxed()
        }
    };
    let leaf = prop_oneof![
        constant().prop_map(Expr::Const),
        index(N_OUT).prop_map(Expr::Output),
        index(N_IN).prop_map(Expr::Input),
        Just(Expr::Norm2Diff(VecRef::Output, VecRef::PairOutput)),
    ];
    leaf.prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            prop::collection::vec(inner, 1..4).prop_map(Expr::Sum),
        ]
    })
}

fn formula_with(bound: bool) -> BoxedStrategy<Formula> {
    let atom = (cmp_op(), expr(bound), expr(bound)).prop_map(|(op, a, b)| Formula::Cmp(op, a, b));
    atom.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            inner.prop_map(Formula::not),
        ]
    })
    .boxed()
}

fn formula() -> impl Strategy<Value = Formula> {
    prop_oneof![
        3 => formula_with(false),
        1 => formula_with(true).prop_map(|body| Formula::big_and("t", set(), body)),
    ]
}

/// Formulas over outputs only, with values on the quarter grid.
fn grid_formula() -> impl Strategy<Value = Formula> {
    let e = prop_oneof![
        (-4i32..=4).prop_map(|k| Expr::Const(k as f64 * 0.25)),
        (0..N_OUT).prop_map(Expr::output),
    ];
    let atom = (cmp_op(), e.clone(), e).prop_map(|(op, a, b)| Formula::Cmp(op, a, b));
    atom.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::implies(a, b)),
            inner.prop_map(Formula::not),
        ]
    })
}

fn grid_outputs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0i32..=4).prop_map(|k| k as f64 * 0.25), N_OUT)
}

fn unit() -> impl Strategy<Value = f64> {
    prop_oneof![1 => Just(0.0), 1 => Just(1.0), 8 => 0.0f64..=1.0]
}

fn tnorm_family() -> impl Strategy<Value = TNorm> {
    prop::sample::select(TNorm::ALL.to_vec())
}

fn t(f: TNorm, x: f64, y: f64) -> f64 {
    tnorm(&mut Plain, f, x, y, 2.0).unwrap()
}

proptest! {
    #[test]
    fn printed_formula_parses_back(f in formula()) {
        let ctx = ParseContext::new(N_OUT).with_inputs(N_IN).with_set(set());
        let text = f.to_string();
        let back = parse(&text, &ctx).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(&back, &f, "{}", text);
    }

    #[test]
    fn push_negations_is_idempotent(f in formula()) {
        let once = push_negations(&f);
        prop_assert!(!once.contains_not());
        prop_assert_eq!(push_negations(&once), once);
    }

    #[test]
    fn tnorm_laws(f in tnorm_family(), x in unit(), y in unit(), z in unit(), w in unit()) {
        prop_assert!((t(f, x, y) - t(f, y, x)).abs() <= 1e-12);
        prop_assert!((t(f, t(f, x, y), z) - t(f, x, t(f, y, z))).abs() <= 1e-12);
        prop_assert!((t(f, x, 1.0) - x).abs() <= 1e-12);
        prop_assert!(t(f, x, 0.0).abs() <= 1e-12);
        let (lo, hi) = if y <= w { (y, w) } else { (w, y) };
        prop_assert!(t(f, x, lo) <= t(f, x, hi) + 1e-12);
        let s = snorm(&mut Plain, f.dual(), x, y, 2.0).unwrap();
        prop_assert!((s - (1.0 - t(f, 1.0 - x, 1.0 - y))).abs() <= 1e-12);
    }

    #[test]
    fn implications_are_antitone_then_monotone(x in unit(), x2 in unit(), y in unit(), y2 in unit()) {
        for kind in Implication::ALL {
            let i = |a, b| implication(&mut Plain, kind, a, b).unwrap();
            let (xl, xh) = if x <= x2 { (x, x2) } else { (x2, x) };
            let (yl, yh) = if y <= y2 { (y, y2) } else { (y2, y) };
            prop_assert!(i(xl, y) + 1e-12 >= i(xh, y), "{:?}", kind);
            prop_assert!(i(x, yl) <= i(x, yh) + 1e-12, "{:?}", kind);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&i(x, y)));
        }
    }

    #[test]
    fn dl2_loss_is_zero_exactly_when_true(f in grid_formula(), out in grid_outputs()) {
        let backend = LogicBackend::from_name("dl2", &LogicParams::default()).unwrap();
        let env = Env::new(&out[..]);
        let loss = compile(&mut Plain, &backend.prepare(&f).unwrap(), &backend, &env).unwrap().loss;
        let holds = eval_crisp(&f, &env).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert_eq!(loss == 0.0, holds, "{} loss {}", f, loss);
    }

    #[test]
    fn fuzzy_truth_stays_in_unit_interval(
        f in grid_formula(),
        out in grid_outputs(),
        k in 1..13usize,
    ) {
        let backend = LogicBackend::all(&LogicParams::default()).swap_remove(k);
        let env = Env::new(&out[..]);
        let v = compile(&mut Plain, &backend.prepare(&f).unwrap(), &backend, &env).unwrap();
        let truth = v.truth.unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&truth), "{} {}", backend.name(), truth);
        prop_assert!((v.loss - (1.0 - truth)).abs() < 1e-12);
    }

    #[test]
    fn tape_gradient_matches_finite_differences(
        f in grid_formula(),
        out in prop::collection::vec(0.05f64..0.95, N_OUT),
        k in 0..13usize,
    ) {
        let backend = LogicBackend::all(&LogicParams::default()).swap_remove(k);
        let prepared = backend.prepare(&f).unwrap();
        let mut tape = Tape::new();
        let vars: Vec<_> = out.iter().map(|v| tape.var(*v)).collect();
        let root = compile(&mut tape, &prepared, &backend, &Env::new(&vars[..])).unwrap().loss;
        prop_assume!(tape.branch_margin() >= 1e-3);
        let g = tape.grad(root, &vars);
        let fd = finite_diff(
            |p: &[f64]| compile(&mut Plain, &prepared, &backend, &Env::new(p)).map(|v| v.loss),
            &out,
            1e-6,
        )
        .unwrap();
        for (id, d) in vars.iter().zip(&fd) {
            let a = g.get(*id);
            prop_assert!((a - d).abs() <= 1e-4 * a.abs().max(d.abs()).max(1.0), "{} {}: {} vs {}", backend.name(), f, a, d);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn push_negations_preserves_crisp_meaning(
        f in grid_formula(),
        out in grid_outputs(),
    ) {
        let env = Env::new(&out[..]);
        let pushed = push_negations(&f);
        prop_assert_eq!(eval_crisp(&f, &env).unwrap(), eval_crisp(&pushed, &env).unwrap(), "{}", f);
    }
}

#[test]
fn plain_arith_agrees_with_tape_values() {
    let mut tape = Tape::new();
    let x = tape.var(0.3);
    let y = tape.var(-1.7);
    let s = tape.sub(x, y).unwrap();
    let e = tape.exp(s).unwrap();
    let p = Plain.sub(0.3, -1.7).unwrap();
    assert_eq!(tape.value(e), Plain.exp(p).unwrap());
}
