//! Shared fixtures: shipped models and random well-typed expression trees.

#![allow(dead_code)]

use std::collections::BTreeMap;

use num_complex::Complex64;
use proptest::prelude::*;
use repfree::ast::{Attachment, Expr, MatrixOrigin, OpExpr, ScalarExpr};
use repfree::model::{load_model, HilbertModel};

pub const UNBOUNDED_MODEL: &str = include_str!("../../data/unbounded.model");
pub const FINITE_MODEL: &str = include_str!("../../data/finite.model");
pub const ROUNDTRIP_CORPUS: &str = include_str!("../../data/roundtrip.txt");

pub fn finite_model() -> HilbertModel {
    load_model(FINITE_MODEL).expect("finite.model loads")
}

pub fn unbounded_model() -> HilbertModel {
    load_model(UNBOUNDED_MODEL).expect("unbounded.model loads")
}

/// States and operators that all exist in `finite.model`.
pub const STATES: [&str; 7] = ["u", "v", "w", "psi", "xi", "e1", "e3"];
pub const OPERATORS: [&str; 4] = ["A", "B", "O", "X"];
pub const SCALARS: [&str; 3] = ["a", "b", "c"];

/// Values for the scalar symbols of the generator.
pub fn scalar_bindings() -> BTreeMap<String, Complex64> {
    [
        ("a", Complex64::new(0.5, -1.0)),
        ("b", Complex64::new(-2.0, 0.25)),
        ("c", Complex64::new(0.0, 1.5)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

pub fn state() -> impl Strategy<Value = Expr> {
    prop::sample::select(&STATES[..]).prop_map(Expr::state)
}

pub fn literal() -> impl Strategy<Value = ScalarExpr> {
    (-3i32..=3, -3i32..=3)
        .prop_map(|(re, im)| ScalarExpr::literal(Complex64::new(re as f64, im as f64)))
}

/// Constant scalars: literals, symbols and their conjugates.
pub fn constant() -> BoxedStrategy<ScalarExpr> {
    let sym = prop::sample::select(&SCALARS[..]).prop_map(ScalarExpr::symbol);
    prop_oneof![
        3 => literal(),
        3 => sym.clone(),
        1 => sym.prop_map(ScalarExpr::conj),
    ]
    .boxed()
}

pub fn op(depth: u32) -> BoxedStrategy<OpExpr> {
    let leaf = prop_oneof![
        6 => prop::sample::select(&OPERATORS[..]).prop_map(OpExpr::symbol),
        1 => Just(OpExpr::identity(None)),
    ];
    if depth == 0 {
        return leaf.boxed();
    }
    let sub = op(depth - 1);
    prop_oneof![
        4 => leaf,
        2 => sub.clone().prop_map(OpExpr::dagger),
        2 => prop::collection::vec(sub, 2..=3).prop_map(OpExpr::Compose),
    ]
    .boxed()
}

pub fn vector(depth: u32) -> BoxedStrategy<Expr> {
    if depth == 0 {
        return state().boxed();
    }
    let v = vector(depth - 1);
    let s = scalar_factor(depth - 1);
    prop_oneof![
        3 => state(),
        3 => (op(2), v.clone()).prop_map(|(o, x)| Expr::apply(o, x)),
        1 => (vector(0), vector(0), v.clone()).prop_map(|(k, b, x)| Expr::apply(OpExpr::outer(k, b), x)),
        1 => (constant(), state()).prop_map(|(c, x)| Expr::scaled(c, x, Attachment::BoundToState)),
        1 => (s.clone(), v.clone()).prop_map(|(c, x)| Expr::scaled(c, x, Attachment::Delimited)),
        1 => (s, v.clone()).prop_map(|(c, x)| Expr::scaled(c, x, Attachment::DelimitedTrailing)),
        1 => prop::collection::vec(v, 2..=3).prop_map(Expr::Sum),
    ]
    .boxed()
}

/// Scalars that can multiply a term: constants or scalar products.
pub fn scalar_factor(depth: u32) -> BoxedStrategy<ScalarExpr> {
    if depth == 0 {
        return constant();
    }
    prop_oneof![
        3 => constant(),
        1 => scalar(depth - 1).prop_map(ScalarExpr::from_expr),
    ]
    .boxed()
}

pub fn scalar(depth: u32) -> BoxedStrategy<Expr> {
    let dotless = (state(), op(1), state())
        .prop_map(|(u, o, v)| Expr::matrix_element(u, o, v, MatrixOrigin::SlashDotless));
    if depth == 0 {
        return prop_oneof![
            (state(), state()).prop_map(|(a, b)| Expr::sp(a, b)),
            dotless,
        ]
        .boxed();
    }
    let v = vector(depth - 1);
    let s = scalar(depth - 1);
    prop_oneof![
        4 => (v.clone(), v).prop_map(|(a, b)| Expr::sp(a, b)),
        1 => dotless,
        1 => literal().prop_map(Expr::Scalar),
        1 => s.clone().prop_map(|x| Expr::from_scalar(ScalarExpr::from_expr(x).conj())),
        1 => (constant(), s.clone()).prop_map(|(c, x)| Expr::scaled(c, x, Attachment::Delimited)),
        1 => prop::collection::vec(s, 2..=3).prop_map(Expr::Sum),
    ]
    .boxed()
}

pub fn operator_expr(depth: u32) -> BoxedStrategy<Expr> {
    let v = vector(depth.saturating_sub(1));
    prop_oneof![
        3 => op(2).prop_map(Expr::Operator),
        2 => (v.clone(), v).prop_map(|(k, b)| Expr::outer(k, b)),
        1 => (constant(), op(1)).prop_map(|(c, o)| Expr::scaled(c, Expr::Operator(o), Attachment::Delimited)),
    ]
    .boxed()
}

/// Any well-typed tree of depth at most `depth + 2`.
pub fn expr(depth: u32) -> BoxedStrategy<Expr> {
    prop_oneof![
        3 => vector(depth),
        4 => scalar(depth),
        1 => vector(depth.saturating_sub(1)).prop_map(Expr::covector),
        1 => operator_expr(depth),
    ]
    .boxed()
}

pub fn approx_eq(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * (1.0 + a.norm().max(b.norm()))
}
