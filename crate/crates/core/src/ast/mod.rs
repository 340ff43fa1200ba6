//! Notation-agnostic expression tree.
//!
//! The same [`Expr`] is produced from slash text (`/u/ . O/v/`) and bra-ket
//! text (`<u|O|v>`); renderers in [`render`] turn it back into either
//! notation or LaTeX.

pub mod render;

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::span::{SourceSpan, Spanned};

pub use render::{
    latex_label, render_braket, render_braket_with, render_latex, render_latex_with, render_slash,
    render_slash_with, LatexDialect, RenderContext, Unrepresentable, LATEX_PREAMBLE,
};

pub type Label = Spanned<String>;

/// How a scalar is attached to the term it multiplies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attachment {
    /// `c/psi/`: the scalar is part of the state itself.
    BoundToState,
    /// `c ^ term`: scalar written first, separated by the delimiter.
    Delimited,
    /// `term ^ c`: scalar written after a vector or operator.
    DelimitedTrailing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixOrigin {
    /// `<u|O|v>`
    BraketChained,
    /// `/u/O/v/`
    SlashDotless,
}

/// Rough type of an expression's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Vector,
    Covector,
    Scalar,
    Operator,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    State(Label),
    /// The covector `/v/ .` of a vector-valued expression.
    Covector(Box<Expr>),
    OpApply(OpExpr, Box<Expr>),
    ScalarProduct(Box<Expr>, Box<Expr>),
    /// `/u/ ^ /v/ .`, the rank-one operator sending w to (v, w) u.
    OuterProduct(Box<Expr>, Box<Expr>),
    Scaled {
        scalar: ScalarExpr,
        term: Box<Expr>,
        attachment: Attachment,
    },
    Sum(Vec<Expr>),
    MatrixElement {
        bra: Box<Expr>,
        op: OpExpr,
        ket: Box<Expr>,
        origin: MatrixOrigin,
    },
    /// A bare operator expression such as `dag(A B)`.
    Operator(OpExpr),
    /// A standalone scalar such as `(2+0i)` or `conj(/u/ . /v/)`.
    Scalar(ScalarExpr),
    /// `/j1//O//j2/`, kept opaque.
    Reduced(Spanned<ReducedParts>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedParts {
    pub bra: String,
    pub op: String,
    pub ket: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpExpr {
    Symbol(Label),
    Dagger(Box<OpExpr>),
    /// Factors in written order; the rightmost acts first.
    Compose(Vec<OpExpr>),
    Identity(Spanned<Option<String>>),
    Outer {
        ket: Box<Expr>,
        bra: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarExpr {
    Literal(Spanned<Complex64>),
    Symbol(Label),
    Conj(Box<ScalarExpr>),
    Times(Vec<ScalarExpr>),
    /// A scalar-valued expression (scalar product, matrix element, ...).
    Expr(Box<Expr>),
}

impl Expr {
    pub fn state(label: impl Into<String>) -> Expr {
        Expr::State(Spanned::new(label.into()))
    }

    pub fn covector(v: Expr) -> Expr {
        Expr::Covector(Box::new(v))
    }

    pub fn apply(op: OpExpr, arg: Expr) -> Expr {
        Expr::OpApply(op, Box::new(arg))
    }

    pub fn sp(left: Expr, right: Expr) -> Expr {
        Expr::ScalarProduct(Box::new(left), Box::new(right))
    }

    pub fn outer(ket: Expr, bra: Expr) -> Expr {
        Expr::OuterProduct(Box::new(ket), Box::new(bra))
    }

    pub fn scaled(scalar: ScalarExpr, term: Expr, attachment: Attachment) -> Expr {
        Expr::Scaled {
            scalar,
            term: Box::new(term),
            attachment,
        }
    }

    pub fn matrix_element(bra: Expr, op: OpExpr, ket: Expr, origin: MatrixOrigin) -> Expr {
        Expr::MatrixElement {
            bra: Box::new(bra),
            op,
            ket: Box::new(ket),
            origin,
        }
    }

    pub fn literal(value: Complex64) -> Expr {
        Expr::Scalar(ScalarExpr::literal(value))
    }

    /// Wraps a scalar, unwrapping `ScalarExpr::Expr` so the tree keeps one
    /// spelling per value.
    pub fn from_scalar(s: ScalarExpr) -> Expr {
        match s {
            ScalarExpr::Expr(e) => *e,
            other => Expr::Scalar(other),
        }
    }

    pub fn kind(&self) -> Kind {
        match self {
            Expr::State(_) | Expr::OpApply(..) => Kind::Vector,
            Expr::Covector(_) => Kind::Covector,
            Expr::ScalarProduct(..)
            | Expr::MatrixElement { .. }
            | Expr::Scalar(_)
            | Expr::Reduced(_) => Kind::Scalar,
            Expr::OuterProduct(..) | Expr::Operator(_) => Kind::Operator,
            Expr::Scaled { term, .. } => term.kind(),
            Expr::Sum(terms) => terms.first().map_or(Kind::Scalar, Expr::kind),
        }
    }

    pub fn is_vector(&self) -> bool {
        self.kind() == Kind::Vector
    }

    /// Union of the spans of all leaves, if any leaf carries one.
    pub fn span(&self) -> Option<SourceSpan> {
        let mut acc: Option<SourceSpan> = None;
        self.visit_spans(&mut |s| {
            acc = Some(match acc {
                Some(a) => a.join(s),
                None => s,
            })
        });
        acc
    }

    fn visit_spans(&self, f: &mut dyn FnMut(SourceSpan)) {
        match self {
            Expr::State(l) => l.span.into_iter().for_each(&mut *f),
            Expr::Covector(v) => v.visit_spans(f),
            Expr::OpApply(op, arg) => {
                op.visit_spans(f);
                arg.visit_spans(f);
            }
            Expr::ScalarProduct(a, b) | Expr::OuterProduct(a, b) => {
                a.visit_spans(f);
                b.visit_spans(f);
            }
            Expr::Scaled { scalar, term, .. } => {
                scalar.visit_spans(f);
                term.visit_spans(f);
            }
            Expr::Sum(terms) => terms.iter().for_each(|t| t.visit_spans(f)),
            Expr::MatrixElement { bra, op, ket, .. } => {
                bra.visit_spans(f);
                op.visit_spans(f);
                ket.visit_spans(f);
            }
            Expr::Operator(op) => op.visit_spans(f),
            Expr::Scalar(s) => s.visit_spans(f),
            Expr::Reduced(r) => r.span.into_iter().for_each(&mut *f),
        }
    }

    /// Calls `f` on every state label, left to right.
    pub fn for_each_state<'a>(&'a self, f: &mut dyn FnMut(&'a Label)) {
        match self {
            Expr::State(l) => f(l),
            Expr::Covector(v) => v.for_each_state(f),
            Expr::OpApply(op, arg) => {
                op.for_each_state(f);
                arg.for_each_state(f);
            }
            Expr::ScalarProduct(a, b) | Expr::OuterProduct(a, b) => {
                a.for_each_state(f);
                b.for_each_state(f);
            }
            Expr::Scaled { scalar, term, .. } => {
                scalar.for_each_state(f);
                term.for_each_state(f);
            }
            Expr::Sum(terms) => terms.iter().for_each(|t| t.for_each_state(f)),
            Expr::MatrixElement { bra, op, ket, .. } => {
                bra.for_each_state(f);
                op.for_each_state(f);
                ket.for_each_state(f);
            }
            Expr::Operator(op) => op.for_each_state(f),
            Expr::Scalar(s) => s.for_each_state(f),
            Expr::Reduced(_) => {}
        }
    }

    /// Calls `f` on every operator symbol, left to right.
    pub fn for_each_symbol<'a>(&'a self, f: &mut dyn FnMut(&'a Label)) {
        match self {
            Expr::State(_) | Expr::Reduced(_) => {}
            Expr::Covector(v) => v.for_each_symbol(f),
            Expr::OpApply(op, arg) => {
                op.for_each_symbol(f);
                arg.for_each_symbol(f);
            }
            Expr::ScalarProduct(a, b) | Expr::OuterProduct(a, b) => {
                a.for_each_symbol(f);
                b.for_each_symbol(f);
            }
            Expr::Scaled { scalar, term, .. } => {
                scalar.for_each_symbol(f);
                term.for_each_symbol(f);
            }
            Expr::Sum(terms) => terms.iter().for_each(|t| t.for_each_symbol(f)),
            Expr::MatrixElement { bra, op, ket, .. } => {
                bra.for_each_symbol(f);
                op.for_each_symbol(f);
                ket.for_each_symbol(f);
            }
            Expr::Operator(op) => op.for_each_symbol(f),
            Expr::Scalar(s) => s.for_each_symbol(f),
        }
    }

    /// Number of nodes, counting operator and scalar sub-nodes.
    pub fn size(&self) -> usize {
        match self {
            Expr::State(_) | Expr::Reduced(_) => 1,
            Expr::Covector(v) => 1 + v.size(),
            Expr::OpApply(op, arg) => 1 + op.size() + arg.size(),
            Expr::ScalarProduct(a, b) | Expr::OuterProduct(a, b) => 1 + a.size() + b.size(),
            Expr::Scaled { scalar, term, .. } => 1 + scalar.size() + term.size(),
            Expr::Sum(terms) => 1 + terms.iter().map(Expr::size).sum::<usize>(),
            Expr::MatrixElement { bra, op, ket, .. } => 1 + bra.size() + op.size() + ket.size(),
            Expr::Operator(op) => 1 + op.size(),
            Expr::Scalar(s) => 1 + s.size(),
        }
    }

    /// Indented tree dump, one node per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        self.dump_into(&mut out, 0);
        out
    }

    fn dump_into(&self, out: &mut String, depth: usize) {
        let pad = "  ".repeat(depth);
        match self {
            Expr::State(l) => {
                let _ = writeln!(out, "{pad}State {}", l.node);
            }
            Expr::Covector(v) => {
                let _ = writeln!(out, "{pad}Covector");
                v.dump_into(out, depth + 1);
            }
            Expr::OpApply(op, arg) => {
                let _ = writeln!(out, "{pad}OpApply");
                op.dump_into(out, depth + 1);
                arg.dump_into(out, depth + 1);
            }
            Expr::ScalarProduct(a, b) => {
                let _ = writeln!(out, "{pad}ScalarProduct");
                a.dump_into(out, depth + 1);
                b.dump_into(out, depth + 1);
            }
            Expr::OuterProduct(a, b) => {
                let _ = writeln!(out, "{pad}OuterProduct");
                a.dump_into(out, depth + 1);
                b.dump_into(out, depth + 1);
            }
            Expr::Scaled {
                scalar,
                term,
                attachment,
            } => {
                let _ = writeln!(out, "{pad}Scaled {attachment:?}");
                scalar.dump_into(out, depth + 1);
                term.dump_into(out, depth + 1);
            }
            Expr::Sum(terms) => {
                let _ = writeln!(out, "{pad}Sum");
                for t in terms {
                    t.dump_into(out, depth + 1);
                }
            }
            Expr::MatrixElement {
                bra,
                op,
                ket,
                origin,
            } => {
                let _ = writeln!(out, "{pad}MatrixElement {origin:?}");
                bra.dump_into(out, depth + 1);
                op.dump_into(out, depth + 1);
                ket.dump_into(out, depth + 1);
            }
            Expr::Operator(op) => {
                let _ = writeln!(out, "{pad}Operator");
                op.dump_into(out, depth + 1);
            }
            Expr::Scalar(s) => s.dump_into(out, depth),
            Expr::Reduced(r) => {
                let _ = writeln!(
                    out,
                    "{pad}ReducedMatrixElement {} | {} | {}",
                    r.bra, r.op, r.ket
                );
            }
        }
    }
}

impl Expr {
    /// Rebuilds this node with `f` applied to every direct sub-expression,
    /// including those nested in operators and scalars.
    pub fn map_children(&self, f: &mut dyn FnMut(&Expr) -> Expr) -> Expr {
        match self {
            Expr::State(_) | Expr::Reduced(_) => self.clone(),
            Expr::Covector(v) => Expr::covector(f(v)),
            Expr::OpApply(op, arg) => Expr::apply(op.map_exprs(f), f(arg)),
            Expr::ScalarProduct(a, b) => Expr::sp(f(a), f(b)),
            Expr::OuterProduct(a, b) => Expr::outer(f(a), f(b)),
            Expr::Scaled {
                scalar,
                term,
                attachment,
            } => Expr::scaled(scalar.map_exprs(f), f(term), *attachment),
            Expr::Sum(terms) => Expr::Sum(terms.iter().map(&mut *f).collect()),
            Expr::MatrixElement {
                bra,
                op,
                ket,
                origin,
            } => Expr::matrix_element(f(bra), op.map_exprs(f), f(ket), *origin),
            Expr::Operator(op) => Expr::Operator(op.map_exprs(f)),
            Expr::Scalar(s) => Expr::Scalar(s.map_exprs(f)),
        }
    }

    /// Direct sub-expressions, including those inside operators and scalars,
    /// in the order [`map_children`](Self::map_children) visits them.
    pub fn children(&self) -> Vec<&Expr> {
        fn op_children<'e>(op: &'e OpExpr, out: &mut Vec<&'e Expr>) {
            match op {
                OpExpr::Symbol(_) | OpExpr::Identity(_) => {}
                OpExpr::Dagger(x) => op_children(x, out),
                OpExpr::Compose(xs) => xs.iter().for_each(|x| op_children(x, out)),
                OpExpr::Outer { ket, bra } => {
                    out.push(ket);
                    out.push(bra);
                }
            }
        }
        fn scalar_children<'e>(s: &'e ScalarExpr, out: &mut Vec<&'e Expr>) {
            match s {
                ScalarExpr::Literal(_) | ScalarExpr::Symbol(_) => {}
                ScalarExpr::Conj(x) => scalar_children(x, out),
                ScalarExpr::Times(xs) => xs.iter().for_each(|x| scalar_children(x, out)),
                ScalarExpr::Expr(e) => out.push(e),
            }
        }
        let mut out = Vec::new();
        match self {
            Expr::State(_) | Expr::Reduced(_) => {}
            Expr::Covector(v) => out.push(&**v),
            Expr::OpApply(op, arg) => {
                op_children(op, &mut out);
                out.push(arg);
            }
            Expr::ScalarProduct(a, b) | Expr::OuterProduct(a, b) => {
                out.push(a);
                out.push(b);
            }
            Expr::Scaled { scalar, term, .. } => {
                scalar_children(scalar, &mut out);
                out.push(term);
            }
            Expr::Sum(ts) => out.extend(ts.iter()),
            Expr::MatrixElement { bra, op, ket, .. } => {
                out.push(bra);
                op_children(op, &mut out);
                out.push(ket);
            }
            Expr::Operator(op) => op_children(op, &mut out),
            Expr::Scalar(s) => scalar_children(s, &mut out),
        }
        out
    }

    /// Copy of `self` with the node at address `target` replaced.
    pub fn replace_node(&self, target: &Expr, with: &Expr) -> Expr {
        if std::ptr::eq(self, target) {
            return with.clone();
        }
        self.map_children(&mut |c| c.replace_node(target, with))
    }
}

impl OpExpr {
    pub fn map_exprs(&self, f: &mut dyn FnMut(&Expr) -> Expr) -> OpExpr {
        match self {
            OpExpr::Symbol(_) | OpExpr::Identity(_) => self.clone(),
            OpExpr::Dagger(x) => OpExpr::dagger(x.map_exprs(f)),
            OpExpr::Compose(xs) => OpExpr::Compose(xs.iter().map(|x| x.map_exprs(f)).collect()),
            OpExpr::Outer { ket, bra } => OpExpr::outer(f(ket), f(bra)),
        }
    }
}

impl ScalarExpr {
    pub fn map_exprs(&self, f: &mut dyn FnMut(&Expr) -> Expr) -> ScalarExpr {
        match self {
            ScalarExpr::Literal(_) | ScalarExpr::Symbol(_) => self.clone(),
            ScalarExpr::Conj(x) => ScalarExpr::Conj(Box::new(x.map_exprs(f))),
            ScalarExpr::Times(xs) => ScalarExpr::Times(xs.iter().map(|x| x.map_exprs(f)).collect()),
            ScalarExpr::Expr(e) => ScalarExpr::Expr(Box::new(f(e))),
        }
    }
}

impl OpExpr {
    pub fn symbol(name: impl Into<String>) -> OpExpr {
        OpExpr::Symbol(Spanned::new(name.into()))
    }

    pub fn dagger(inner: OpExpr) -> OpExpr {
        OpExpr::Dagger(Box::new(inner))
    }

    /// A composition; a single factor is returned unchanged.
    pub fn compose(mut factors: Vec<OpExpr>) -> OpExpr {
        if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            OpExpr::Compose(factors)
        }
    }

    pub fn identity(basis: Option<String>) -> OpExpr {
        OpExpr::Identity(Spanned::new(basis))
    }

    pub fn outer(ket: Expr, bra: Expr) -> OpExpr {
        OpExpr::Outer {
            ket: Box::new(ket),
            bra: Box::new(bra),
        }
    }

    /// The operator written when `<u|X` is read as a left action:
    /// `dag(Y)` becomes `Y`, anything else gets wrapped in `dag`.
    pub fn left_action(self) -> OpExpr {
        match self {
            OpExpr::Dagger(inner) => *inner,
            other => OpExpr::dagger(other),
        }
    }

    /// Factors in written order (a non-composition is a single factor).
    pub fn factors(&self) -> &[OpExpr] {
        match self {
            OpExpr::Compose(fs) => fs,
            other => std::slice::from_ref(other),
        }
    }

    fn visit_spans(&self, f: &mut dyn FnMut(SourceSpan)) {
        match self {
            OpExpr::Symbol(l) => l.span.into_iter().for_each(&mut *f),
            OpExpr::Dagger(x) => x.visit_spans(f),
            OpExpr::Compose(xs) => xs.iter().for_each(|x| x.visit_spans(f)),
            OpExpr::Identity(b) => b.span.into_iter().for_each(&mut *f),
            OpExpr::Outer { ket, bra } => {
                ket.visit_spans(f);
                bra.visit_spans(f);
            }
        }
    }

    pub fn span(&self) -> Option<SourceSpan> {
        let mut acc: Option<SourceSpan> = None;
        self.visit_spans(&mut |s| {
            acc = Some(match acc {
                Some(a) => a.join(s),
                None => s,
            })
        });
        acc
    }

    pub fn for_each_state<'a>(&'a self, f: &mut dyn FnMut(&'a Label)) {
        match self {
            OpExpr::Symbol(_) | OpExpr::Identity(_) => {}
            OpExpr::Dagger(x) => x.for_each_state(f),
            OpExpr::Compose(xs) => xs.iter().for_each(|x| x.for_each_state(f)),
            OpExpr::Outer { ket, bra } => {
                ket.for_each_state(f);
                bra.for_each_state(f);
            }
        }
    }

    pub fn for_each_symbol<'a>(&'a self, f: &mut dyn FnMut(&'a Label)) {
        match self {
            OpExpr::Symbol(l) => f(l),
            OpExpr::Identity(_) => {}
            OpExpr::Dagger(x) => x.for_each_symbol(f),
            OpExpr::Compose(xs) => xs.iter().for_each(|x| x.for_each_symbol(f)),
            OpExpr::Outer { ket, bra } => {
                ket.for_each_symbol(f);
                bra.for_each_symbol(f);
            }
        }
    }

    fn size(&self) -> usize {
        match self {
            OpExpr::Symbol(_) | OpExpr::Identity(_) => 1,
            OpExpr::Dagger(x) => 1 + x.size(),
            OpExpr::Compose(xs) => 1 + xs.iter().map(OpExpr::size).sum::<usize>(),
            OpExpr::Outer { ket, bra } => 1 + ket.size() + bra.size(),
        }
    }

    fn dump_into(&self, out: &mut String, depth: usize) {
        let pad = "  ".repeat(depth);
        match self {
            OpExpr::Symbol(l) => {
                let _ = writeln!(out, "{pad}Op {}", l.node);
            }
            OpExpr::Dagger(x) => {
                let _ = writeln!(out, "{pad}Dagger");
                x.dump_into(out, depth + 1);
            }
            OpExpr::Compose(xs) => {
                let _ = writeln!(out, "{pad}Compose");
                for x in xs {
                    x.dump_into(out, depth + 1);
                }
            }
            OpExpr::Identity(b) => match &b.node {
                Some(basis) => {
                    let _ = writeln!(out, "{pad}Identity [{basis}]");
                }
                None => {
                    let _ = writeln!(out, "{pad}Identity");
                }
            },
            OpExpr::Outer { ket, bra } => {
                let _ = writeln!(out, "{pad}OuterOp");
                ket.dump_into(out, depth + 1);
                bra.dump_into(out, depth + 1);
            }
        }
    }
}

impl ScalarExpr {
    pub fn literal(value: Complex64) -> ScalarExpr {
        ScalarExpr::Literal(Spanned::new(value))
    }

    pub fn real(value: f64) -> ScalarExpr {
        ScalarExpr::literal(Complex64::new(value, 0.0))
    }

    pub fn symbol(name: impl Into<String>) -> ScalarExpr {
        ScalarExpr::Symbol(Spanned::new(name.into()))
    }

    /// Wraps a scalar-valued expression, unwrapping `Expr::Scalar`.
    pub fn from_expr(e: Expr) -> ScalarExpr {
        match e {
            Expr::Scalar(s) => s,
            other => ScalarExpr::Expr(Box::new(other)),
        }
    }

    /// Complex conjugate, folding literals and double conjugation.
    pub fn conj(self) -> ScalarExpr {
        match self {
            ScalarExpr::Literal(l) => ScalarExpr::Literal(Spanned {
                node: l.node.conj(),
                span: l.span,
            }),
            ScalarExpr::Conj(inner) => *inner,
            other => ScalarExpr::Conj(Box::new(other)),
        }
    }

    /// True for scalars that do not involve any vector expression.
    pub fn is_constant(&self) -> bool {
        match self {
            ScalarExpr::Literal(_) | ScalarExpr::Symbol(_) => true,
            ScalarExpr::Conj(x) => x.is_constant(),
            ScalarExpr::Times(xs) => xs.iter().all(ScalarExpr::is_constant),
            ScalarExpr::Expr(_) => false,
        }
    }

    pub fn as_literal(&self) -> Option<Complex64> {
        match self {
            ScalarExpr::Literal(l) => Some(l.node),
            _ => None,
        }
    }

    fn visit_spans(&self, f: &mut dyn FnMut(SourceSpan)) {
        match self {
            ScalarExpr::Literal(l) => l.span.into_iter().for_each(&mut *f),
            ScalarExpr::Symbol(l) => l.span.into_iter().for_each(&mut *f),
            ScalarExpr::Conj(x) => x.visit_spans(f),
            ScalarExpr::Times(xs) => xs.iter().for_each(|x| x.visit_spans(f)),
            ScalarExpr::Expr(e) => e.visit_spans(f),
        }
    }

    fn for_each_state<'a>(&'a self, f: &mut dyn FnMut(&'a Label)) {
        match self {
            ScalarExpr::Literal(_) | ScalarExpr::Symbol(_) => {}
            ScalarExpr::Conj(x) => x.for_each_state(f),
            ScalarExpr::Times(xs) => xs.iter().for_each(|x| x.for_each_state(f)),
            ScalarExpr::Expr(e) => e.for_each_state(f),
        }
    }

    fn for_each_symbol<'a>(&'a self, f: &mut dyn FnMut(&'a Label)) {
        match self {
            ScalarExpr::Literal(_) | ScalarExpr::Symbol(_) => {}
            ScalarExpr::Conj(x) => x.for_each_symbol(f),
            ScalarExpr::Times(xs) => xs.iter().for_each(|x| x.for_each_symbol(f)),
            ScalarExpr::Expr(e) => e.for_each_symbol(f),
        }
    }

    fn size(&self) -> usize {
        match self {
            ScalarExpr::Literal(_) | ScalarExpr::Symbol(_) => 1,
            ScalarExpr::Conj(x) => 1 + x.size(),
            ScalarExpr::Times(xs) => 1 + xs.iter().map(ScalarExpr::size).sum::<usize>(),
            ScalarExpr::Expr(e) => 1 + e.size(),
        }
    }

    fn dump_into(&self, out: &mut String, depth: usize) {
        let pad = "  ".repeat(depth);
        match self {
            ScalarExpr::Literal(l) => {
                let _ = writeln!(out, "{pad}Literal {}", format_complex(l.node));
            }
            ScalarExpr::Symbol(l) => {
                let _ = writeln!(out, "{pad}Constant {}", l.node);
            }
            ScalarExpr::Conj(x) => {
                let _ = writeln!(out, "{pad}Conj");
                x.dump_into(out, depth + 1);
            }
            ScalarExpr::Times(xs) => {
                let _ = writeln!(out, "{pad}Times");
                for x in xs {
                    x.dump_into(out, depth + 1);
                }
            }
            ScalarExpr::Expr(e) => e.dump_into(out, depth),
        }
    }
}

/// Canonical text of a complex literal: `(re+imi)` / `(re-imi)`.
///
/// The sign of a zero imaginary part is kept, so `conj(2+0i)` prints as
/// `(2-0i)`.
pub fn format_complex(z: Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("({}{}{}i)", z.re, sign, z.im.abs())
}
