mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use repfree::ast::{render_braket, render_slash, Expr, Kind};
use repfree::checker::check;
use repfree::model::HilbertModel;
use repfree::numeric::{evaluate_unchecked, random_vector, Value};
use repfree::parser::{parse_braket, parse_slash, Notation};
use repfree::rewriter::{adjoint, convert, expand_linear, insert_identity, simplify, Basis, Site};

fn depth(e: &Expr) -> usize {
    1 + e.children().into_iter().map(depth).max().unwrap_or(0)
}

fn value(e: &Expr, m: &HilbertModel) -> Value {
    evaluate_unchecked(e, m, None, &scalar_bindings()).expect("generated trees evaluate")
}

fn close(a: &Value, b: &Value, tol: f64) -> bool {
    let flat = |v: &Value| -> Vec<Complex64> {
        match v {
            Value::Scalar(z) => vec![*z],
            Value::Vector(x) | Value::Covector(x) => x.iter().copied().collect(),
            Value::Matrix { entries, .. } => entries.iter().copied().collect(),
        }
    };
    let (x, y) = (flat(a), flat(b));
    std::mem::discriminant(a) == std::mem::discriminant(b)
        && x.len() == y.len()
        && x.iter().zip(&y).all(|(p, q)| approx_eq(*p, *q, tol))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 600, ..ProptestConfig::default() })]

    #[test]
    fn slash_render_parse_round_trip(e in expr(4)) {
        prop_assume!(depth(&e) <= 6);
        let text = render_slash(&e);
        let back = parse_slash(&text).map_err(|err| TestCaseError::fail(format!("`{text}`: {err}")))?;
        prop_assert_eq!(back, e, "{}", text);
    }

    #[test]
    fn braket_text_round_trip(e in expr(3)) {
        let b = convert(&e, Notation::Braket).expr;
        if let Ok(text) = render_braket(&b) {
            let back = parse_braket(&text).map_err(|err| TestCaseError::fail(format!("`{text}`: {err}")))?;
            prop_assert_eq!(convert(&back, Notation::Slash).expr, convert(&b, Notation::Slash).expr, "{}", text);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, ..ProptestConfig::default() })]

    #[test]
    fn convert_round_trip_matches_simplify(e in expr(3)) {
        let there = convert(&e, Notation::Braket).expr;
        let back = convert(&there, Notation::Slash).expr;
        prop_assert_eq!(simplify(&back).expr, simplify(&e).expr);
    }

    #[test]
    fn simplify_is_idempotent_and_traced(e in expr(3)) {
        let once = simplify(&e);
        prop_assert_eq!(once.trace.replay(&e), Some(once.expr.clone()));
        let twice = simplify(&once.expr);
        prop_assert!(twice.trace.steps.is_empty(), "{:?}", twice.trace.steps.first().map(|s| s.rule));
        prop_assert_eq!(twice.expr, once.expr);
    }

    #[test]
    fn rewrites_preserve_value(e in expr(3)) {
        let m = finite_model();
        let v = value(&e, &m);
        prop_assert!(close(&v, &value(&simplify(&e).expr, &m), 1e-10), "simplify: {}", render_slash(&e));
        prop_assert!(close(&v, &value(&expand_linear(&e).expr, &m), 1e-10), "expand: {}", render_slash(&e));
        prop_assert!(close(&v, &value(&convert(&e, Notation::Braket).expr, &m), 1e-12), "convert: {}", render_slash(&e));
    }

    #[test]
    fn adjoint_matches_matrix_adjoint(e in operator_expr(2)) {
        let m = finite_model();
        let Value::Matrix { entries, .. } = value(&e, &m) else { panic!("operator value") };
        let a = adjoint(&e).unwrap().expr;
        let Value::Matrix { entries: adj, .. } = value(&a, &m) else { panic!("operator value") };
        prop_assert!((adj - entries.adjoint()).norm() <= 1e-10 * (1.0 + entries.norm()));
    }

    #[test]
    fn identity_insertion_preserves_value(e in scalar(2), k in 0usize..4) {
        let m = finite_model();
        let basis = Basis::from_model(&m, "e", None).unwrap();
        if let Ok(r) = insert_identity(&e, &basis, Site::Dot(k)) {
            prop_assert!(close(&value(&e, &m), &value(&r.expr, &m), 1e-10));
        }
        if let Ok(r) = insert_identity(&e, &basis, Site::Apply(k)) {
            prop_assert!(close(&value(&e, &m), &value(&r.expr, &m), 1e-10));
        }
    }

    #[test]
    fn finite_model_has_no_domain_errors(e in expr(3)) {
        let m = finite_model();
        let diags = check(&e, &m).unwrap();
        prop_assert!(diags.iter().all(|d| !d.is_error()), "{:?}", diags);
    }

    #[test]
    fn antilinear_adjoint_identity(seed in any::<u64>(), dim in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = (random_vector(&mut rng, dim), random_vector(&mut rng, dim));
        let m = two_states(dim, &u, &v, true);
        let lhs = evaluate_unchecked(&parse_slash("dag(K)/u/ . /v/").unwrap(), &m, None, &Default::default()).unwrap();
        let rhs = evaluate_unchecked(&parse_slash("K/v/ . /u/").unwrap(), &m, None, &Default::default()).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn conjugate_symmetry(seed in any::<u64>(), dim in 1usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, v) = (random_vector(&mut rng, dim), random_vector(&mut rng, dim));
        let m = two_states(dim, &u, &v, false);
        let a = m.inner_product("u", "v", None).unwrap();
        let b = m.inner_product("v", "u", None).unwrap();
        prop_assert!((a - b.conj()).norm() <= 1e-14);
    }
}

/// A finite model with states `u`, `v` and the conjugation operator `K`.
fn two_states(
    dim: usize,
    u: &DVector<Complex64>,
    v: &DVector<Complex64>,
    with_k: bool,
) -> HilbertModel {
    let mut text = format!("[space]\nkind = finite\ndim = {dim}\n");
    for (l, x) in [("u", u), ("v", v)] {
        let cs: Vec<String> = x.iter().map(|z| format!("({},{})", z.re, z.im)).collect();
        text.push_str(&format!("[state {l}]\ncoeffs = {}\n", cs.join(", ")));
    }
    if with_k {
        let id = DMatrix::<f64>::identity(dim, dim);
        let rows: Vec<String> = id
            .row_iter()
            .map(|r| {
                r.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            })
            .collect();
        text.push_str(&format!(
            "[operator K]\nmatrix = {}\nantilinear = true\n",
            rows.join("; ")
        ));
    }
    repfree::model::load_model(&text).unwrap()
}

#[test]
fn generated_kinds_cover_everything() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let mut runner = TestRunner::deterministic();
    let strat = expr(3);
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..200 {
        let e = strat.new_tree(&mut runner).unwrap().current();
        seen.insert(format!("{:?}", e.kind()));
    }
    for k in [Kind::Vector, Kind::Covector, Kind::Scalar, Kind::Operator] {
        assert!(seen.contains(&format!("{k:?}")), "{k:?} never generated");
    }
}
