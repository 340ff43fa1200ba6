//! Value-preserving rewrites: notation conversion, adjoints, identity
//! insertion, linear expansion and simplification.
//!
//! Every rewrite runs through one engine that applies the first matching
//! rule at the innermost-leftmost position, records the step, and repeats
//! until nothing matches.

use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::ast::{
    render_braket_with, render_slash_with, Attachment, Expr, Kind, MatrixOrigin, OpExpr,
    RenderContext, ScalarExpr,
};
use crate::model::{HilbertModel, ModelError};
use crate::parser::Notation;

const MAX_STEPS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub rule: &'static str,
    pub before: Expr,
    pub after: Expr,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RewriteTrace {
    pub steps: Vec<Step>,
    /// Caveats attached by individual rules.
    pub notes: Vec<String>,
}

impl RewriteTrace {
    fn push(&mut self, rule: &'static str, before: Expr, after: Expr) {
        self.steps.push(Step {
            rule,
            before,
            after,
        });
    }

    fn note(&mut self, note: &str) {
        if !self.notes.iter().any(|n| n == note) {
            self.notes.push(note.to_string());
        }
    }

    fn extend(&mut self, other: RewriteTrace) {
        self.steps.extend(other.steps);
        for n in other.notes {
            self.note(&n);
        }
    }

    /// Replays the steps from `start`; `None` if the chain is broken.
    pub fn replay(&self, start: &Expr) -> Option<Expr> {
        let mut cur = start.clone();
        for s in &self.steps {
            if s.before != cur {
                return None;
            }
            cur = s.after.clone();
        }
        Some(cur)
    }

    /// Numbered step list, one rule per line. Steps that cannot be shown
    /// in bra-ket fall back to slash text.
    pub fn render(&self, notation: Notation, ctx: &RenderContext) -> String {
        let show = |e: &Expr| match notation {
            Notation::Slash => render_slash_with(e, ctx),
            Notation::Braket => {
                render_braket_with(e, ctx).unwrap_or_else(|_| render_slash_with(e, ctx))
            }
        };
        let mut out = String::new();
        for (i, s) in self.steps.iter().enumerate() {
            let _ = writeln!(
                out,
                "{}. {}: {} => {}",
                i + 1,
                s.rule,
                show(&s.before),
                show(&s.after)
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rewritten {
    pub expr: Expr,
    pub trace: RewriteTrace,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewriteError {
    #[error("adjoint needs an operator-valued expression")]
    NotOperator,
    #[error("no {0} in the expression")]
    InvalidSite(Site),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub const NOTE_INVOLUTION: &str =
    "dag(dag(X)) = X assumes X is closable; for such operators the closure is X itself";
pub const NOTE_CHAINED: &str =
    "chained <u|O|v> is only meaningful when u is in D(dag(O)) and v is in D(O); check it against a model";

type Rule<'r> = dyn Fn(&Expr, &mut RewriteTrace) -> Option<(&'static str, Expr)> + 'r;

fn step(e: &Expr, rules: &Rule, trace: &mut RewriteTrace) -> Option<(&'static str, Expr)> {
    for c in e.children() {
        if let Some((rule, nc)) = step(c, rules, trace) {
            return Some((rule, e.replace_node(c, &nc)));
        }
    }
    rules(e, trace)
}

fn run(e: &Expr, rules: &Rule, global: Option<&Rule>, trace: &mut RewriteTrace) -> Expr {
    let mut cur = e.clone();
    for _ in 0..MAX_STEPS {
        let next = step(&cur, rules, trace).or_else(|| global.and_then(|g| g(&cur, trace)));
        match next {
            Some((rule, next)) => {
                trace.push(rule, cur.clone(), next.clone());
                cur = next;
            }
            None => return cur,
        }
    }
    panic!("rewrite did not reach a fixpoint in {MAX_STEPS} steps");
}

// ---- conversion -------------------------------------------------------------

/// Rewrites notation-specific nodes for `target`. The tree is otherwise
/// notation-agnostic, so rendering does the rest.
pub fn convert(e: &Expr, target: Notation) -> Rewritten {
    convert_with(e, target, &RenderContext::default())
}

pub fn convert_with(e: &Expr, target: Notation, ctx: &RenderContext) -> Rewritten {
    let mut trace = RewriteTrace::default();
    let rules = |e: &Expr, t: &mut RewriteTrace| -> Option<(&'static str, Expr)> {
        match (target, e) {
            (Notation::Braket, Expr::ScalarProduct(a, b)) => {
                let Expr::OpApply(op, ket) = &**b else {
                    return None;
                };
                if !chainable(a, op, ket, ctx) {
                    return None;
                }
                t.note(NOTE_CHAINED);
                Some((
                    "chain-matrix-element",
                    Expr::matrix_element(
                        (**a).clone(),
                        op.clone(),
                        (**ket).clone(),
                        MatrixOrigin::BraketChained,
                    ),
                ))
            }
            (
                Notation::Braket,
                Expr::MatrixElement {
                    bra,
                    op,
                    ket,
                    origin: MatrixOrigin::SlashDotless,
                },
            ) => {
                if chainable(bra, op, ket, ctx) {
                    t.note(NOTE_CHAINED);
                    Some((
                        "chain-matrix-element",
                        Expr::matrix_element(
                            (**bra).clone(),
                            op.clone(),
                            (**ket).clone(),
                            MatrixOrigin::BraketChained,
                        ),
                    ))
                } else {
                    Some(("explicit-dot", explicit_dot(bra, op, ket)))
                }
            }
            (
                Notation::Slash,
                Expr::MatrixElement {
                    bra,
                    op,
                    ket,
                    origin: MatrixOrigin::BraketChained,
                },
            ) => Some(("unchain-matrix-element", explicit_dot(bra, op, ket))),
            _ => None,
        }
    };
    let expr = run(e, &rules, None, &mut trace);
    Rewritten { expr, trace }
}

fn chainable(bra: &Expr, op: &OpExpr, ket: &Expr, ctx: &RenderContext) -> bool {
    fn plain(op: &OpExpr) -> bool {
        match op {
            OpExpr::Symbol(_) | OpExpr::Identity(_) => true,
            OpExpr::Dagger(x) => plain(x),
            OpExpr::Compose(xs) => xs.iter().all(plain),
            OpExpr::Outer { .. } => false,
        }
    }
    matches!(bra, Expr::State(_))
        && matches!(ket, Expr::State(_))
        && plain(op)
        && !ctx.is_antilinear(op)
}

fn explicit_dot(bra: &Expr, op: &OpExpr, ket: &Expr) -> Expr {
    Expr::sp(bra.clone(), Expr::apply(op.clone(), ket.clone()))
}

// ---- simplification ---------------------------------------------------------

pub fn simplify(e: &Expr) -> Rewritten {
    let mut trace = RewriteTrace::default();
    let expr = run(e, &simplify_rule, Some(&conj_symmetry), &mut trace);
    Rewritten { expr, trace }
}

fn simplify_rule(e: &Expr, t: &mut RewriteTrace) -> Option<(&'static str, Expr)> {
    match e {
        Expr::Scalar(ScalarExpr::Expr(x)) => Some(("unwrap-scalar", (**x).clone())),
        Expr::Scalar(s) => scalar_step(s).map(|(r, s)| (r, Expr::Scalar(s))),
        Expr::Operator(OpExpr::Outer { ket, bra }) => Some((
            "outer-as-expression",
            Expr::OuterProduct(ket.clone(), bra.clone()),
        )),
        Expr::Operator(op) => op_step(op, t).map(|(r, op)| (r, Expr::Operator(op))),
        Expr::OpApply(op, arg) => {
            if let Some((r, op)) = op_step(op, t) {
                return Some((r, Expr::OpApply(op, arg.clone())));
            }
            if let OpExpr::Outer { ket, bra } = op {
                return Some((
                    "collapse-outer",
                    Expr::scaled(
                        ScalarExpr::from_expr(Expr::sp((**bra).clone(), (**arg).clone())),
                        (**ket).clone(),
                        Attachment::DelimitedTrailing,
                    ),
                ));
            }
            None
        }
        Expr::MatrixElement {
            bra,
            op,
            ket,
            origin,
        } => {
            if let Some((r, op)) = op_step(op, t) {
                return Some((
                    r,
                    Expr::matrix_element((**bra).clone(), op, (**ket).clone(), *origin),
                ));
            }
            if *origin == MatrixOrigin::SlashDotless {
                return Some(("explicit-dot", explicit_dot(bra, op, ket)));
            }
            None
        }
        Expr::Sum(ts) => {
            if ts.len() == 1 {
                return Some(("single-term-sum", ts[0].clone()));
            }
            if ts.iter().any(|t| matches!(t, Expr::Sum(_))) {
                let flat = ts
                    .iter()
                    .flat_map(|t| match t {
                        Expr::Sum(inner) => inner.clone(),
                        other => vec![other.clone()],
                    })
                    .collect();
                return Some(("flatten-sum", Expr::Sum(flat)));
            }
            None
        }
        Expr::Scaled {
            scalar,
            term,
            attachment,
        } => {
            if let Some((r, s)) = scalar_step(scalar) {
                return Some((r, Expr::scaled(s, (**term).clone(), *attachment)));
            }
            if *attachment == Attachment::DelimitedTrailing && scalar.is_constant() {
                return Some((
                    "constant-leftward",
                    Expr::scaled(scalar.clone(), (**term).clone(), Attachment::Delimited),
                ));
            }
            if let Expr::Scaled {
                scalar: inner,
                term: inner_term,
                attachment: inner_att,
            } = &**term
            {
                let same = *attachment == *inner_att
                    && matches!(attachment, Attachment::Delimited | Attachment::BoundToState);
                if same && scalar.is_constant() && inner.is_constant() {
                    return Some((
                        "merge-constants",
                        Expr::scaled(
                            times(scalar.clone(), inner.clone()),
                            (**inner_term).clone(),
                            *attachment,
                        ),
                    ));
                }
            }
            None
        }
        Expr::OuterProduct(k, b) => {
            if let Expr::Scaled { scalar, term, .. } = &**k {
                if scalar.is_constant() {
                    return Some((
                        "extract-constant",
                        Expr::scaled(
                            scalar.clone(),
                            Expr::outer((**term).clone(), (**b).clone()),
                            Attachment::Delimited,
                        ),
                    ));
                }
            }
            if let Expr::Scaled { scalar, term, .. } = &**b {
                if scalar.is_constant() {
                    return Some((
                        "extract-constant",
                        Expr::scaled(
                            scalar.clone().conj(),
                            Expr::outer((**k).clone(), (**term).clone()),
                            Attachment::Delimited,
                        ),
                    ));
                }
            }
            None
        }
        Expr::ScalarProduct(a, b) => {
            if let Expr::Scaled { scalar, term, .. } = &**a {
                return Some((
                    "left-slot-conj",
                    Expr::scaled(
                        scalar.clone().conj(),
                        Expr::sp((**term).clone(), (**b).clone()),
                        Attachment::Delimited,
                    ),
                ));
            }
            if let Expr::Scaled { scalar, term, .. } = &**b {
                return Some((
                    "right-slot-linear",
                    Expr::scaled(
                        scalar.clone(),
                        Expr::sp((**a).clone(), (**term).clone()),
                        Attachment::Delimited,
                    ),
                ));
            }
            None
        }
        Expr::State(_) | Expr::Covector(_) | Expr::Reduced(_) => None,
    }
}

/// Product of two scalars, flattening products and folding literals.
fn times(a: ScalarExpr, b: ScalarExpr) -> ScalarExpr {
    match (a.as_literal(), b.as_literal()) {
        (Some(x), Some(y)) => ScalarExpr::literal(x * y),
        _ => {
            let mut fs = Vec::new();
            for s in [a, b] {
                match s {
                    ScalarExpr::Times(xs) => fs.extend(xs),
                    other => fs.push(other),
                }
            }
            ScalarExpr::Times(fs)
        }
    }
}

fn scalar_step(s: &ScalarExpr) -> Option<(&'static str, ScalarExpr)> {
    match s {
        ScalarExpr::Conj(x) => {
            if let Some((r, x)) = scalar_step(x) {
                return Some((r, ScalarExpr::Conj(Box::new(x))));
            }
            match &**x {
                ScalarExpr::Conj(inner) => Some(("conj-involution", (**inner).clone())),
                ScalarExpr::Literal(_) => Some(("conj-literal", (**x).clone().conj())),
                _ => None,
            }
        }
        ScalarExpr::Times(xs) => {
            for (i, x) in xs.iter().enumerate() {
                if let Some((r, nx)) = scalar_step(x) {
                    let mut ys = xs.clone();
                    ys[i] = nx;
                    return Some((r, ScalarExpr::Times(ys)));
                }
            }
            if xs.len() == 1 {
                return Some(("single-factor", xs[0].clone()));
            }
            if xs.iter().any(|x| matches!(x, ScalarExpr::Times(_))) {
                let flat = xs
                    .iter()
                    .flat_map(|x| match x {
                        ScalarExpr::Times(inner) => inner.clone(),
                        other => vec![other.clone()],
                    })
                    .collect();
                return Some(("flatten-product", ScalarExpr::Times(flat)));
            }
            let lits: Vec<usize> = (0..xs.len())
                .filter(|&i| xs[i].as_literal().is_some())
                .collect();
            if lits.len() >= 2 {
                let prod: Complex64 = lits.iter().map(|&i| xs[i].as_literal().unwrap()).product();
                let mut ys: Vec<ScalarExpr> = Vec::new();
                for (i, x) in xs.iter().enumerate() {
                    if i == lits[0] {
                        ys.push(ScalarExpr::literal(prod));
                    } else if !lits.contains(&i) {
                        ys.push(x.clone());
                    }
                }
                return Some(("fold-literals", ScalarExpr::Times(ys)));
            }
            None
        }
        ScalarExpr::Expr(e) => match &**e {
            Expr::Scalar(inner) => Some(("unwrap-scalar", inner.clone())),
            _ => None,
        },
        ScalarExpr::Literal(_) | ScalarExpr::Symbol(_) => None,
    }
}

/// Daggers pushed inward and compositions flattened.
fn op_step(op: &OpExpr, t: &mut RewriteTrace) -> Option<(&'static str, OpExpr)> {
    match op {
        OpExpr::Dagger(x) => {
            if let Some((r, x)) = op_step(x, t) {
                return Some((r, OpExpr::dagger(x)));
            }
            match &**x {
                OpExpr::Dagger(inner) => {
                    t.note(NOTE_INVOLUTION);
                    Some(("dagger-involution", (**inner).clone()))
                }
                OpExpr::Compose(xs) => Some((
                    "dagger-compose",
                    OpExpr::Compose(xs.iter().rev().map(|x| OpExpr::dagger(x.clone())).collect()),
                )),
                OpExpr::Outer { ket, bra } => Some((
                    "dagger-outer",
                    OpExpr::Outer {
                        ket: bra.clone(),
                        bra: ket.clone(),
                    },
                )),
                OpExpr::Identity(_) => Some(("dagger-identity", (**x).clone())),
                OpExpr::Symbol(_) => None,
            }
        }
        OpExpr::Compose(xs) => {
            for (i, x) in xs.iter().enumerate() {
                if let Some((r, nx)) = op_step(x, t) {
                    let mut ys = xs.clone();
                    ys[i] = nx;
                    return Some((r, OpExpr::Compose(ys)));
                }
            }
            if xs.len() == 1 {
                return Some(("single-factor", xs[0].clone()));
            }
            if xs.iter().any(|x| matches!(x, OpExpr::Compose(_))) {
                let flat = xs
                    .iter()
                    .flat_map(|x| match x {
                        OpExpr::Compose(inner) => inner.clone(),
                        other => vec![other.clone()],
                    })
                    .collect();
                return Some(("flatten-compose", OpExpr::Compose(flat)));
            }
            None
        }
        OpExpr::Symbol(_) | OpExpr::Identity(_) | OpExpr::Outer { .. } => None,
    }
}

/// When both `/a/ . /b/` and `/b/ . /a/` occur, the later orientation is
/// rewritten as `conj(/a/ . /b/)`.
fn conj_symmetry(root: &Expr, _t: &mut RewriteTrace) -> Option<(&'static str, Expr)> {
    let mut sps: Vec<&Expr> = Vec::new();
    fn collect<'e>(e: &'e Expr, out: &mut Vec<&'e Expr>) {
        if let Expr::ScalarProduct(..) = e {
            out.push(e);
        }
        for c in e.children() {
            collect(c, out);
        }
    }
    collect(root, &mut sps);
    for (j, later) in sps.iter().enumerate() {
        let Expr::ScalarProduct(b, a) = later else {
            unreachable!()
        };
        if a == b {
            continue;
        }
        let earlier = sps[..j].iter().find(|e| match e {
            Expr::ScalarProduct(x, y) => x == a && y == b,
            _ => false,
        });
        if let Some(Expr::ScalarProduct(x, y)) = earlier {
            let flipped =
                Expr::Scalar(ScalarExpr::from_expr(Expr::sp((**x).clone(), (**y).clone())).conj());
            return Some(("conj-symmetry", root.replace_node(later, &flipped)));
        }
    }
    None
}

// ---- adjoint ----------------------------------------------------------------

/// `dag(e)` for an operator-valued `e`, with the dagger pushed inward.
pub fn adjoint(e: &Expr) -> Result<Rewritten, RewriteError> {
    adjoint_with(e, &RenderContext::default())
}

pub fn adjoint_with(e: &Expr, ctx: &RenderContext) -> Result<Rewritten, RewriteError> {
    let wrapped = dag_wrap(e, ctx)?;
    let mut trace = RewriteTrace::default();
    trace.push("adjoint", e.clone(), wrapped.clone());
    let simplified = simplify(&wrapped);
    trace.extend(simplified.trace);
    Ok(Rewritten {
        expr: simplified.expr,
        trace,
    })
}

fn dag_wrap(e: &Expr, ctx: &RenderContext) -> Result<Expr, RewriteError> {
    Ok(match e {
        Expr::Operator(op) => Expr::Operator(OpExpr::dagger(op.clone())),
        Expr::OuterProduct(k, b) => Expr::OuterProduct(b.clone(), k.clone()),
        Expr::Scaled {
            scalar,
            term,
            attachment,
        } if term.kind() == Kind::Operator => {
            // (cO)† = conj(c) O† for linear O, but c O† for anti-linear O.
            let anti = matches!(&**term, Expr::Operator(op) if ctx.is_antilinear(op));
            let s = if anti {
                scalar.clone()
            } else {
                scalar.clone().conj()
            };
            Expr::scaled(s, dag_wrap(term, ctx)?, *attachment)
        }
        Expr::Sum(ts) if e.kind() == Kind::Operator => Expr::Sum(
            ts.iter()
                .map(|t| dag_wrap(t, ctx))
                .collect::<Result<_, _>>()?,
        ),
        _ => return Err(RewriteError::NotOperator),
    })
}

// ---- identity insertion -----------------------------------------------------

/// Where to insert a resolution of the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    /// At the k-th scalar-product dot (pre-order, 0-based).
    Dot(usize),
    /// On both sides of the operator in the k-th `/u/ . O/v/` element.
    Around(usize),
    /// Between the operator and its argument in the k-th application.
    Apply(usize),
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Site::Dot(k) => write!(f, "scalar product #{k}"),
            Site::Around(k) => write!(f, "matrix element #{k}"),
            Site::Apply(k) => write!(f, "operator application #{k}"),
        }
    }
}

impl std::str::FromStr for Site {
    type Err = String;

    /// `dot[:k]`, `around[:k]` or `apply[:k]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, k) = match s.split_once(':') {
            Some((a, b)) => (
                a,
                b.parse::<usize>()
                    .map_err(|_| format!("bad site index `{b}`"))?,
            ),
            None => (s, 0),
        };
        match kind {
            "dot" => Ok(Site::Dot(k)),
            "around" => Ok(Site::Around(k)),
            "apply" => Ok(Site::Apply(k)),
            _ => Err(format!("unknown site `{s}`; use dot, around or apply")),
        }
    }
}

/// A discrete orthonormal basis by state labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub name: String,
    pub labels: Vec<String>,
}

impl Basis {
    pub fn new(name: impl Into<String>, labels: Vec<String>) -> Self {
        Basis {
            name: name.into(),
            labels,
        }
    }

    pub fn from_model(
        m: &HilbertModel,
        name: &str,
        n: Option<usize>,
    ) -> Result<Self, RewriteError> {
        Ok(Basis::new(name, m.basis_labels(name, n)?))
    }
}

/// `/x/ . /n/ ^ /n/ . /y/` as a tree: the leading product scales the rest.
fn through(x: Expr, n: &str, y: Expr) -> Expr {
    Expr::scaled(
        ScalarExpr::from_expr(Expr::sp(x, Expr::state(n))),
        Expr::sp(Expr::state(n), y),
        Attachment::Delimited,
    )
}

pub fn insert_identity(e: &Expr, basis: &Basis, site: Site) -> Result<Rewritten, RewriteError> {
    let target = find_site(e, site).ok_or(RewriteError::InvalidSite(site))?;
    let replacement = match (site, target) {
        (Site::Dot(_), Expr::ScalarProduct(a, b)) => Expr::Sum(
            basis
                .labels
                .iter()
                .map(|n| through((**a).clone(), n, (**b).clone()))
                .collect(),
        ),
        (Site::Around(_), _) => {
            let (u, op, v) = match target {
                Expr::ScalarProduct(u, b) => match &**b {
                    Expr::OpApply(op, v) => ((**u).clone(), op.clone(), (**v).clone()),
                    _ => unreachable!(),
                },
                Expr::MatrixElement { bra, op, ket, .. } => {
                    ((**bra).clone(), op.clone(), (**ket).clone())
                }
                _ => unreachable!(),
            };
            let mut terms = Vec::new();
            for m in &basis.labels {
                for n in &basis.labels {
                    // /u/ . /m/ ^ /m/ . O/n/ ^ /n/ . /v/
                    terms.push(Expr::scaled(
                        ScalarExpr::from_expr(Expr::sp(u.clone(), Expr::state(m))),
                        Expr::scaled(
                            ScalarExpr::from_expr(Expr::sp(
                                Expr::state(m),
                                Expr::apply(op.clone(), Expr::state(n)),
                            )),
                            Expr::sp(Expr::state(n), v.clone()),
                            Attachment::Delimited,
                        ),
                        Attachment::Delimited,
                    ));
                }
            }
            Expr::Sum(terms)
        }
        (Site::Apply(_), Expr::OpApply(op, v)) => Expr::Sum(
            basis
                .labels
                .iter()
                .map(|n| {
                    Expr::scaled(
                        ScalarExpr::from_expr(Expr::sp(Expr::state(n), (**v).clone())),
                        Expr::apply(op.clone(), Expr::state(n)),
                        Attachment::DelimitedTrailing,
                    )
                })
                .collect(),
        ),
        _ => unreachable!(),
    };
    let expr = e.replace_node(target, &replacement);
    let mut trace = RewriteTrace::default();
    trace.push("insert-identity", e.clone(), expr.clone());
    Ok(Rewritten { expr, trace })
}

fn find_site(e: &Expr, site: Site) -> Option<&Expr> {
    let matches = |x: &Expr| match (site, x) {
        (Site::Dot(_), Expr::ScalarProduct(..)) => true,
        (Site::Around(_), Expr::ScalarProduct(_, b)) => matches!(&**b, Expr::OpApply(..)),
        (Site::Around(_), Expr::MatrixElement { .. }) => true,
        (Site::Apply(_), Expr::OpApply(..)) => true,
        _ => false,
    };
    let k = match site {
        Site::Dot(k) | Site::Around(k) | Site::Apply(k) => k,
    };
    let mut found = Vec::new();
    fn walk<'e>(e: &'e Expr, pred: &dyn Fn(&Expr) -> bool, out: &mut Vec<&'e Expr>) {
        if pred(e) {
            out.push(e);
        }
        for c in e.children() {
            walk(c, pred, out);
        }
    }
    walk(e, &matches, &mut found);
    found.get(k).copied()
}

// ---- linear expansion -------------------------------------------------------

/// Distributes operators, scalar products, covectors and outer products
/// over sums and pulls scalars out of them.
pub fn expand_linear(e: &Expr) -> Rewritten {
    expand_linear_with(e, &RenderContext::default())
}

pub fn expand_linear_with(e: &Expr, ctx: &RenderContext) -> Rewritten {
    let mut trace = RewriteTrace::default();
    let rules = |e: &Expr, _t: &mut RewriteTrace| expand_rule(e, ctx);
    let expr = run(e, &rules, None, &mut trace);
    Rewritten { expr, trace }
}

fn pull(scalar: &ScalarExpr, term: Expr) -> Expr {
    Expr::scaled(scalar.clone(), term, Attachment::Delimited)
}

fn expand_rule(e: &Expr, ctx: &RenderContext) -> Option<(&'static str, Expr)> {
    match e {
        Expr::Sum(ts) if ts.iter().any(|t| matches!(t, Expr::Sum(_))) => Some((
            "flatten-sum",
            Expr::Sum(
                ts.iter()
                    .flat_map(|t| match t {
                        Expr::Sum(inner) => inner.clone(),
                        other => vec![other.clone()],
                    })
                    .collect(),
            ),
        )),
        Expr::ScalarProduct(a, b) => {
            if let Expr::Sum(ts) = &**a {
                return Some((
                    "distribute-left-slot",
                    Expr::Sum(
                        ts.iter()
                            .map(|t| Expr::sp(t.clone(), (**b).clone()))
                            .collect(),
                    ),
                ));
            }
            if let Expr::Sum(ts) = &**b {
                return Some((
                    "distribute-right-slot",
                    Expr::Sum(
                        ts.iter()
                            .map(|t| Expr::sp((**a).clone(), t.clone()))
                            .collect(),
                    ),
                ));
            }
            if let Expr::Scaled { scalar, term, .. } = &**a {
                return Some((
                    "left-slot-conj",
                    pull(
                        &scalar.clone().conj(),
                        Expr::sp((**term).clone(), (**b).clone()),
                    ),
                ));
            }
            if let Expr::Scaled { scalar, term, .. } = &**b {
                return Some((
                    "right-slot-linear",
                    pull(scalar, Expr::sp((**a).clone(), (**term).clone())),
                ));
            }
            None
        }
        Expr::OpApply(op, arg) => {
            if let Expr::Sum(ts) = &**arg {
                return Some((
                    "distribute-operator",
                    Expr::Sum(
                        ts.iter()
                            .map(|t| Expr::apply(op.clone(), t.clone()))
                            .collect(),
                    ),
                ));
            }
            if let Expr::Scaled { scalar, term, .. } = &**arg {
                let (rule, s) = if ctx.is_antilinear(op) {
                    ("antilinear-conj", scalar.clone().conj())
                } else {
                    ("operator-linear", scalar.clone())
                };
                return Some((rule, pull(&s, Expr::apply(op.clone(), (**term).clone()))));
            }
            None
        }
        Expr::Covector(v) => {
            if let Expr::Sum(ts) = &**v {
                return Some((
                    "distribute-covector",
                    Expr::Sum(ts.iter().map(|t| Expr::covector(t.clone())).collect()),
                ));
            }
            if let Expr::Scaled { scalar, term, .. } = &**v {
                return Some((
                    "covector-conj",
                    pull(&scalar.clone().conj(), Expr::covector((**term).clone())),
                ));
            }
            None
        }
        Expr::OuterProduct(k, b) => {
            if let Expr::Sum(ts) = &**k {
                return Some((
                    "distribute-outer",
                    Expr::Sum(
                        ts.iter()
                            .map(|t| Expr::outer(t.clone(), (**b).clone()))
                            .collect(),
                    ),
                ));
            }
            if let Expr::Sum(ts) = &**b {
                return Some((
                    "distribute-outer",
                    Expr::Sum(
                        ts.iter()
                            .map(|t| Expr::outer((**k).clone(), t.clone()))
                            .collect(),
                    ),
                ));
            }
            None
        }
        Expr::Scaled { scalar, term, .. } => {
            if let Expr::Sum(ts) = &**term {
                return Some((
                    "distribute-scalar",
                    Expr::Sum(ts.iter().map(|t| pull(scalar, t.clone())).collect()),
                ));
            }
            None
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::render_slash;
    use crate::parser::{parse_braket, parse_slash};

    fn slash(s: &str) -> Expr {
        parse_slash(s).unwrap()
    }

    #[test]
    fn convert_examples() {
        let e = parse_braket("<psi|O").unwrap();
        assert_eq!(
            render_slash(&convert(&e, Notation::Slash).expr),
            "dag(O)/psi/ ."
        );
        let e = slash("/u/ ^ /v/ .");
        let c = convert(&e, Notation::Braket);
        assert_eq!(crate::ast::render_braket(&c.expr).unwrap(), "|u><v|");
        let e = slash("/psi/ . O/xi/");
        let c = convert(&e, Notation::Braket);
        assert_eq!(crate::ast::render_braket(&c.expr).unwrap(), "<psi|O|xi>");
        assert_eq!(c.trace.notes, vec![NOTE_CHAINED.to_string()]);
        let back = convert(&c.expr, Notation::Slash);
        assert_eq!(back.expr, e);
    }

    #[test]
    fn antilinear_stays_unchained() {
        let ctx = RenderContext::with_antilinear(["K"]);
        let e = slash("/u/ . K/v/");
        let c = convert_with(&e, Notation::Braket, &ctx);
        assert_eq!(c.expr, e);
        assert_eq!(render_braket_with(&c.expr, &ctx).unwrap(), "<u|(K|v>)");
    }

    #[test]
    fn adjoint_examples() {
        let a = adjoint(&slash("/u/ ^ /v/ .")).unwrap();
        assert_eq!(a.expr, slash("/v/ ^ /u/ ."));
        let a = adjoint(&slash("A B")).unwrap();
        assert_eq!(a.expr, slash("dag(B) dag(A)"));
        let a = adjoint(&slash("dag(X)")).unwrap();
        assert_eq!(a.expr, slash("X"));
        let a = adjoint(&slash("dag(dag(X))")).unwrap();
        assert_eq!(a.expr, slash("dag(X)"));
        assert!(a.trace.notes.iter().any(|n| n == NOTE_INVOLUTION));
        assert_eq!(adjoint(&slash("/u/ . /v/")), Err(RewriteError::NotOperator));
        let c = adjoint(&slash("(2+1i) ^ (A)")).unwrap();
        assert_eq!(c.expr, slash("(2-1i) ^ (dag(A))"));
    }

    #[test]
    fn simplify_examples() {
        let s = simplify(&slash("(2+0i)/psi/ . /xi/"));
        assert_eq!(render_slash(&s.expr), "(2-0i) ^ /psi/ . /xi/");
        let s = simplify(&slash("(/u/ ^ /v/ .) /w/"));
        assert_eq!(s.expr, slash("/u/ ^ /v/ . /w/"));
        let s = simplify(&slash("/m/ ^ c ^ /n/ ."));
        assert_eq!(s.expr, slash("c ^ /m/ ^ /n/ ."));
        let s = simplify(&slash("/u/O/v/"));
        assert_eq!(s.expr, slash("/u/ . O/v/"));
        let s = simplify(&slash("/u/ . /v/ + /v/ . /u/"));
        assert_eq!(s.expr, slash("/u/ . /v/ + conj(/u/ . /v/)"));
        let s = simplify(&slash("/v/ . /u/"));
        assert_eq!(s.expr, slash("/v/ . /u/"));
    }

    #[test]
    fn simplify_is_idempotent_and_replays() {
        for text in [
            "(2+0i)/psi/ . /xi/",
            "dag(dag(A) B)/u/ . /v/",
            "/w/ . (/u/ ^ /v/ .) /w/ + /u/ . /w/",
            "/m/ ^ c ^ /n/ .",
            "conj(conj(/u/ . /v/)) ^ /w/",
        ] {
            let e = slash(text);
            let once = simplify(&e);
            assert_eq!(once.trace.replay(&e).as_ref(), Some(&once.expr), "{text}");
            assert_eq!(simplify(&once.expr).expr, once.expr, "{text}");
            assert!(simplify(&once.expr).trace.steps.is_empty());
        }
    }

    #[test]
    fn identity_insertion() {
        let basis = Basis::new("n", vec!["n1".into(), "n2".into()]);
        let r = insert_identity(&slash("/xi/ . /psi/"), &basis, Site::Dot(0)).unwrap();
        assert_eq!(
            r.expr,
            slash("/xi/ . /n1/ ^ /n1/ . /psi/ + /xi/ . /n2/ ^ /n2/ . /psi/")
        );
        let r = insert_identity(&slash("/u/ . O/v/"), &basis, Site::Around(0)).unwrap();
        let Expr::Sum(ts) = &r.expr else { panic!() };
        assert_eq!(ts.len(), 4);
        assert_eq!(ts[1], slash("/u/ . /n1/ ^ /n1/ . O/n2/ ^ /n2/ . /v/"));
        let r = insert_identity(&slash("O/v/"), &basis, Site::Apply(0)).unwrap();
        assert_eq!(r.expr, slash("O/n1/ ^ /n1/ . /v/ + O/n2/ ^ /n2/ . /v/"));
        assert!(insert_identity(&slash("/u/"), &basis, Site::Dot(0)).is_err());
    }

    #[test]
    fn linear_expansion() {
        let r = expand_linear(&slash("/u/ . (a * /v/ + b * /w/)"));
        assert_eq!(r.expr, slash("a ^ /u/ . /v/ + b ^ /u/ . /w/"));
        let r = expand_linear(&slash("(a * /v/ + b * /w/) . /u/"));
        assert_eq!(r.expr, slash("conj(a) ^ /v/ . /u/ + conj(b) ^ /w/ . /u/"));
        let ctx = RenderContext::with_antilinear(["K"]);
        let r = expand_linear_with(&slash("K (c * /v/)"), &ctx);
        assert_eq!(r.expr, slash("conj(c) ^ K/v/"));
    }
}
