//! Slash, bra-ket and LaTeX renderers.
//!
//! Rendering is deterministic and parenthesizes liberally: the slash output
//! of any tree built by the parser reads back to the same tree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{format_complex, Attachment, Expr, MatrixOrigin, OpExpr, ScalarExpr};
use crate::span::SourceSpan;

/// Model facts a renderer may need: which operators are anti-linear, and
/// display names for declared adjoints.
#[derive(Debug, Clone, Default)]
pub struct RenderContext {
    pub antilinear: BTreeSet<String>,
    pub adjoint_names: BTreeMap<String, String>,
}

impl RenderContext {
    pub fn with_antilinear<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        RenderContext {
            antilinear: names.into_iter().map(Into::into).collect(),
            adjoint_names: BTreeMap::new(),
        }
    }

    /// True when the operator has an odd number of anti-linear factors.
    pub fn is_antilinear(&self, op: &OpExpr) -> bool {
        match op {
            OpExpr::Symbol(s) => self.antilinear.contains(&s.node),
            OpExpr::Dagger(x) => self.is_antilinear(x),
            OpExpr::Compose(xs) => xs.iter().filter(|x| self.is_antilinear(x)).count() % 2 == 1,
            OpExpr::Identity(_) | OpExpr::Outer { .. } => false,
        }
    }
}

/// A construct with no faithful bra-ket spelling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unrepresentable {
    pub construct: String,
    pub span: Option<SourceSpan>,
}

impl fmt::Display for Unrepresentable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unrepresentable in bra-ket notation: {}", self.construct)
    }
}

impl std::error::Error for Unrepresentable {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatexDialect {
    Slash,
    Braket,
}

pub fn render_slash(e: &Expr) -> String {
    render_slash_with(e, &RenderContext::default())
}

pub fn render_slash_with(e: &Expr, ctx: &RenderContext) -> String {
    Slash { latex: false, ctx }.expr(e)
}

pub fn render_braket(e: &Expr) -> Result<String, Unrepresentable> {
    render_braket_with(e, &RenderContext::default())
}

pub fn render_braket_with(e: &Expr, ctx: &RenderContext) -> Result<String, Unrepresentable> {
    Braket { latex: false, ctx }.expr(e)
}

pub fn render_latex(e: &Expr, dialect: LatexDialect) -> Result<String, Unrepresentable> {
    render_latex_with(e, dialect, &RenderContext::default())
}

pub fn render_latex_with(
    e: &Expr,
    dialect: LatexDialect,
    ctx: &RenderContext,
) -> Result<String, Unrepresentable> {
    match dialect {
        LatexDialect::Slash => Ok(Slash { latex: true, ctx }.expr(e)),
        LatexDialect::Braket => Braket { latex: true, ctx }.expr(e),
    }
}

/// Preamble lines that make the LaTeX output compile.
pub const LATEX_PREAMBLE: &str = "\\usepackage{amssymb}\n\
\\newcommand{\\lcdot}{\\mathbin{\\stackrel{\\centerdot}{}}}\n\
\\newcommand{\\sep}{_{\\scriptscriptstyle\\land}}\n";

const GREEK: &[&str] = &[
    "alpha",
    "beta",
    "gamma",
    "delta",
    "epsilon",
    "varepsilon",
    "zeta",
    "eta",
    "theta",
    "vartheta",
    "iota",
    "kappa",
    "lambda",
    "mu",
    "nu",
    "xi",
    "pi",
    "rho",
    "sigma",
    "tau",
    "upsilon",
    "phi",
    "varphi",
    "chi",
    "psi",
    "omega",
    "Gamma",
    "Delta",
    "Theta",
    "Lambda",
    "Xi",
    "Pi",
    "Sigma",
    "Upsilon",
    "Phi",
    "Psi",
    "Omega",
];

/// `psi1` becomes `\psi_{1}`, `v12` becomes `v_{12}`; LaTeX specials are
/// escaped.
pub fn latex_label(label: &str) -> String {
    let digits = label
        .chars()
        .rev()
        .take_while(|c| c.is_ascii_digit())
        .count();
    let split = label.len() - digits;
    let (stem, sub) = label.split_at(split);
    let stem_tex = if GREEK.contains(&stem) {
        format!("\\{stem}")
    } else {
        let mut s = String::new();
        for c in stem.chars() {
            match c {
                '#' | '$' | '%' | '&' | '_' | '{' | '}' => {
                    s.push('\\');
                    s.push(c);
                }
                '^' => s.push_str("\\hat{}"),
                '~' => s.push_str("\\sim "),
                '\\' => s.push_str("\\backslash "),
                c => s.push(c),
            }
        }
        s
    };
    if sub.is_empty() || stem.is_empty() {
        if stem.is_empty() {
            return sub.to_string();
        }
        stem_tex
    } else {
        format!("{stem_tex}_{{{sub}}}")
    }
}

/// Joins around a LaTeX macro, inserting a space when the macro would
/// otherwise run into a letter.
fn macro_join(left: &str, mac: &str, right: &str) -> String {
    let sep = if right.starts_with(|c: char| c.is_ascii_alphabetic()) {
        " "
    } else {
        ""
    };
    format!("{left}{mac}{sep}{right}")
}

fn paren(s: String) -> String {
    format!("({s})")
}

fn is_bare_op(e: &Expr) -> bool {
    matches!(e, Expr::Operator(OpExpr::Symbol(_)))
}

struct Slash<'a> {
    latex: bool,
    ctx: &'a RenderContext,
}

impl Slash<'_> {
    fn state(&self, label: &str) -> String {
        if self.latex {
            format!("/{}/", latex_label(label))
        } else {
            format!("/{label}/")
        }
    }

    fn dot(&self, l: &str, r: &str) -> String {
        if self.latex {
            macro_join(l, "\\lcdot", r)
        } else {
            format!("{l} . {r}")
        }
    }

    fn trailing_dot(&self, l: &str) -> String {
        if self.latex {
            format!("{l}\\lcdot")
        } else {
            format!("{l} .")
        }
    }

    fn delim(&self, l: &str, r: &str) -> String {
        if self.latex {
            macro_join(l, "\\sep", r)
        } else {
            format!("{l} ^ {r}")
        }
    }

    fn expr(&self, e: &Expr) -> String {
        match e {
            Expr::Sum(terms) => terms
                .iter()
                .map(|t| match t {
                    Expr::Sum(_) => paren(self.expr(t)),
                    _ => self.chain(t, false),
                })
                .collect::<Vec<_>>()
                .join(" + "),
            _ => self.chain(e, false),
        }
    }

    fn chain(&self, e: &Expr, multi: bool) -> String {
        match e {
            Expr::Sum(_) => paren(self.expr(e)),
            Expr::Scaled {
                scalar,
                term,
                attachment: Attachment::Delimited,
            } => self.delim(&self.scalar_item(scalar), &self.chain(term, true)),
            Expr::Scaled {
                scalar,
                term,
                attachment: Attachment::DelimitedTrailing,
            } => {
                let left = match term.as_ref() {
                    Expr::Sum(_)
                    | Expr::Scaled {
                        attachment: Attachment::Delimited,
                        ..
                    } => paren(self.expr(term)),
                    t if t.kind() == super::Kind::Scalar => paren(self.expr(term)),
                    t => self.chain(t, true),
                };
                self.delim(&left, &self.scalar_item(scalar))
            }
            Expr::OuterProduct(k, b) => self.outer(k, b),
            _ => self.dotted(e, multi),
        }
    }

    fn outer(&self, k: &Expr, b: &Expr) -> String {
        self.trailing_dot(&self.delim(&self.unit(k), &self.unit(b)))
    }

    fn dotted(&self, e: &Expr, multi: bool) -> String {
        match e {
            Expr::ScalarProduct(a, b) => self.dot(&self.unit(a), &self.unit(b)),
            Expr::Covector(v) => self.trailing_dot(&self.unit(v)),
            Expr::MatrixElement {
                bra,
                op,
                ket,
                origin: MatrixOrigin::SlashDotless,
            } if matches!(bra.as_ref(), Expr::State(_))
                && matches!(ket.as_ref(), Expr::State(_)) =>
            {
                format!("{}{}{}", self.unit(bra), self.ops(op), self.unit(ket))
            }
            Expr::MatrixElement { bra, op, ket, .. } => {
                let right = self.apply(op, ket);
                self.dot(&self.unit(bra), &right)
            }
            _ => self.atom(e, multi),
        }
    }

    fn apply(&self, op: &OpExpr, arg: &Expr) -> String {
        let ops = self.ops(op);
        match arg {
            Expr::State(l) => format!("{ops}{}", self.state(l)),
            _ => format!("{ops} {}", paren(self.expr(arg))),
        }
    }

    fn atom(&self, e: &Expr, multi: bool) -> String {
        match e {
            Expr::State(l) => self.state(l),
            Expr::OpApply(op, arg) => self.apply(op, arg),
            Expr::Scaled {
                scalar,
                term,
                attachment: Attachment::BoundToState,
            } => {
                let t = match term.as_ref() {
                    Expr::State(l) => self.state(l),
                    other => paren(self.expr(other)),
                };
                match scalar {
                    ScalarExpr::Literal(z) => format!("{}{t}", format_complex(z.node)),
                    s if self.latex => format!("{}{t}", self.sfactor_list(s)),
                    s => format!("{} * {t}", self.sfactor_list(s)),
                }
            }
            Expr::Operator(op) => {
                let text = match op {
                    OpExpr::Outer { ket, bra } => return paren(self.outer(ket, bra)),
                    _ => self.ops(op),
                };
                if multi && is_bare_op(e) {
                    paren(text)
                } else {
                    text
                }
            }
            Expr::Scalar(s) => {
                if multi {
                    self.scalar_item(s)
                } else {
                    self.scalar_standalone(s)
                }
            }
            Expr::Reduced(r) => {
                if self.latex {
                    format!(
                        "/{}//{}//{}/",
                        latex_label(&r.bra),
                        latex_label(&r.op),
                        latex_label(&r.ket)
                    )
                } else {
                    format!("/{}//{}//{}/", r.bra, r.op, r.ket)
                }
            }
            _ => paren(self.expr(e)),
        }
    }

    /// Operand of a dot, an outer product or a bound scalar.
    fn unit(&self, e: &Expr) -> String {
        match e {
            Expr::State(_)
            | Expr::OpApply(..)
            | Expr::Scaled {
                attachment: Attachment::BoundToState,
                ..
            } => self.atom(e, false),
            _ => paren(self.expr(e)),
        }
    }

    fn scalar_item(&self, s: &ScalarExpr) -> String {
        match s {
            ScalarExpr::Times(_) => paren(self.scalar_standalone(s)),
            ScalarExpr::Expr(e) => match e.as_ref() {
                Expr::ScalarProduct(..) | Expr::MatrixElement { .. } | Expr::Reduced(_) => {
                    self.dotted(e, true)
                }
                Expr::Scalar(inner) => self.scalar_item(inner),
                _ => paren(self.expr(e)),
            },
            _ => self.scalar_standalone(s),
        }
    }

    fn scalar_standalone(&self, s: &ScalarExpr) -> String {
        match s {
            ScalarExpr::Literal(z) => format_complex(z.node),
            ScalarExpr::Symbol(l) => {
                if self.latex {
                    latex_label(l)
                } else {
                    l.node.clone()
                }
            }
            ScalarExpr::Conj(x) => {
                if self.latex {
                    match x.as_ref() {
                        ScalarExpr::Symbol(_) | ScalarExpr::Literal(_) => {
                            format!("{}^{{*}}", self.scalar_standalone(x))
                        }
                        _ => format!("({})^{{*}}", self.scalar_standalone(x)),
                    }
                } else {
                    format!("conj({})", self.scalar_standalone(x))
                }
            }
            ScalarExpr::Times(_) => self.sfactor_list(s),
            ScalarExpr::Expr(e) => self.expr(e),
        }
    }

    /// `a * b * c` with each factor a simple scalar or a parenthesized one.
    fn sfactor_list(&self, s: &ScalarExpr) -> String {
        let factors: Vec<&ScalarExpr> = match s {
            ScalarExpr::Times(xs) => xs.iter().collect(),
            other => vec![other],
        };
        let sep = if self.latex { "\\," } else { " * " };
        factors
            .iter()
            .map(|f| match f {
                ScalarExpr::Literal(_) | ScalarExpr::Symbol(_) | ScalarExpr::Conj(_) => {
                    self.scalar_standalone(f)
                }
                ScalarExpr::Times(_) => paren(self.scalar_standalone(f)),
                ScalarExpr::Expr(e) => paren(self.expr(e)),
            })
            .collect::<Vec<_>>()
            .join(sep)
    }

    fn ops(&self, op: &OpExpr) -> String {
        match op {
            OpExpr::Compose(xs) => xs
                .iter()
                .map(|x| match x {
                    OpExpr::Compose(_) => paren(self.ops(x)),
                    _ => self.op_factor(x),
                })
                .collect::<Vec<_>>()
                .join(" "),
            _ => self.op_factor(op),
        }
    }

    fn op_factor(&self, op: &OpExpr) -> String {
        match op {
            OpExpr::Symbol(l) => {
                if self.latex {
                    latex_label(l)
                } else {
                    l.node.clone()
                }
            }
            OpExpr::Dagger(inner) => {
                if let OpExpr::Symbol(l) = inner.as_ref() {
                    if let Some(name) = self.ctx.adjoint_names.get(&l.node) {
                        return if self.latex {
                            latex_label(name)
                        } else {
                            name.clone()
                        };
                    }
                }
                if self.latex {
                    match inner.as_ref() {
                        OpExpr::Symbol(_) | OpExpr::Identity(_) => {
                            format!("{}^{{\\dagger}}", self.op_factor(inner))
                        }
                        _ => format!("({})^{{\\dagger}}", self.ops(inner)),
                    }
                } else {
                    format!("dag({})", self.ops(inner))
                }
            }
            OpExpr::Identity(b) => match (&b.node, self.latex) {
                (None, _) => "I".to_string(),
                (Some(n), false) => format!("I[{n}]"),
                (Some(n), true) => format!("I_{{{}}}", latex_label(n)),
            },
            OpExpr::Outer { ket, bra } => paren(self.outer(ket, bra)),
            OpExpr::Compose(_) => paren(self.ops(op)),
        }
    }
}

struct Braket<'a> {
    latex: bool,
    ctx: &'a RenderContext,
}

type R = Result<String, Unrepresentable>;

fn unrep(construct: &str, e: &Expr) -> Unrepresentable {
    Unrepresentable {
        construct: construct.to_string(),
        span: e.span(),
    }
}

impl Braket<'_> {
    fn label(&self, l: &str) -> String {
        if self.latex {
            latex_label(l)
        } else {
            l.to_string()
        }
    }

    fn ket(&self, l: &str) -> String {
        if self.latex {
            format!("|{}\\rangle", self.label(l))
        } else {
            format!("|{l}>")
        }
    }

    fn bra(&self, l: &str) -> String {
        if self.latex {
            format!("\\langle {}|", self.label(l))
        } else {
            format!("<{l}|")
        }
    }

    fn close(&self) -> &'static str {
        if self.latex {
            "\\rangle"
        } else {
            ">"
        }
    }

    fn delim(&self, l: &str, r: &str) -> String {
        if self.latex {
            format!("{l}\\,{r}")
        } else {
            format!("{l} * {r}")
        }
    }

    fn expr(&self, e: &Expr) -> R {
        match e {
            Expr::Sum(terms) => {
                let mut parts = Vec::with_capacity(terms.len());
                for t in terms {
                    parts.push(match t {
                        Expr::Sum(_) => paren(self.expr(t)?),
                        _ => self.chain(t, false)?,
                    });
                }
                Ok(parts.join(" + "))
            }
            _ => self.chain(e, false),
        }
    }

    fn chain(&self, e: &Expr, multi: bool) -> R {
        match e {
            Expr::Sum(_) => Ok(paren(self.expr(e)?)),
            Expr::Scaled {
                scalar,
                term,
                attachment: Attachment::Delimited,
            } => Ok(self.delim(&self.scalar_item(scalar, e)?, &self.chain(term, true)?)),
            Expr::Scaled {
                scalar,
                term,
                attachment: Attachment::DelimitedTrailing,
            } => {
                let left = match term.as_ref() {
                    Expr::Sum(_)
                    | Expr::Scaled {
                        attachment: Attachment::Delimited,
                        ..
                    } => paren(self.expr(term)?),
                    t if t.kind() == super::Kind::Scalar => paren(self.expr(term)?),
                    t => self.chain(t, true)?,
                };
                Ok(self.delim(&left, &self.scalar_item(scalar, e)?))
            }
            _ => self.atom(e, multi),
        }
    }

    /// Ket-side spelling of a vector.
    fn ket_part(&self, v: &Expr) -> R {
        match v {
            Expr::State(l) => Ok(self.ket(l)),
            Expr::OpApply(..)
            | Expr::Scaled {
                attachment: Attachment::BoundToState,
                ..
            } => self.atom(v, false),
            _ => Ok(paren(self.expr(v)?)),
        }
    }

    /// Bra-side spelling of a vector: `<u|` or `<u|X` with the left action
    /// chosen so that it reads back as the same tree.
    fn bra_part(&self, v: &Expr) -> R {
        match v {
            Expr::State(l) => Ok(self.bra(l)),
            Expr::OpApply(z, arg) => {
                let Expr::State(l) = arg.as_ref() else {
                    return Err(unrep("covector of a composite vector", v));
                };
                if self.ctx.is_antilinear(z) {
                    return Err(unrep("anti-linear operator acting to the left", v));
                }
                let written = match z {
                    OpExpr::Dagger(w) if !matches!(w.as_ref(), OpExpr::Dagger(_)) => {
                        w.as_ref().clone()
                    }
                    other => OpExpr::dagger(other.clone()),
                };
                Ok(format!("{}{}", self.bra(l), self.ops(&written)))
            }
            Expr::Scaled {
                attachment: Attachment::BoundToState,
                ..
            } => Err(unrep("scalar bound to a bra", v)),
            _ => Err(unrep("covector of a composite vector", v)),
        }
    }

    fn atom(&self, e: &Expr, multi: bool) -> R {
        match e {
            Expr::State(l) => Ok(self.ket(l)),
            Expr::Covector(v) => self.bra_part(v),
            Expr::OpApply(op, arg) => {
                let ops = self.ops(op);
                Ok(match arg.as_ref() {
                    Expr::State(l) => format!("{ops}{}", self.ket(l)),
                    other => format!("{ops} {}", paren(self.expr(other)?)),
                })
            }
            Expr::ScalarProduct(a, b) => match (a.as_ref(), b.as_ref()) {
                (Expr::State(u), Expr::State(v)) => {
                    if self.latex {
                        Ok(format!(
                            "\\langle {}|{}\\rangle",
                            self.label(u),
                            self.label(v)
                        ))
                    } else {
                        Ok(format!("<{}|{}>", u.node, v.node))
                    }
                }
                (Expr::State(u), other) => {
                    Ok(format!("{}{}", self.bra(u), paren(self.expr(other)?)))
                }
                (Expr::OpApply(z, _), _) if self.ctx.is_antilinear(z) => {
                    Err(unrep("anti-linear operator in chained form", e))
                }
                (left, right) => {
                    let bra = self.bra_part(left)?;
                    let ket = match right {
                        Expr::State(v) => self.ket(v),
                        other => paren(self.expr(other)?),
                    };
                    Ok(format!("{}{ket}", paren(bra)))
                }
            },
            Expr::OuterProduct(k, b) => Ok(format!("{}{}", self.ket_part(k)?, self.bra_part(b)?)),
            Expr::Scaled {
                scalar,
                term,
                attachment: Attachment::BoundToState,
            } => {
                let ScalarExpr::Literal(z) = scalar else {
                    return Err(unrep("non-literal scalar bound to a ket", e));
                };
                let t = match term.as_ref() {
                    Expr::State(l) => self.ket(l),
                    other => paren(self.expr(other)?),
                };
                Ok(format!("{}{t}", format_complex(z.node)))
            }
            Expr::MatrixElement { bra, op, ket, .. } => {
                if self.ctx.is_antilinear(op) {
                    return Err(unrep("anti-linear operator in chained form", e));
                }
                match (bra.as_ref(), ket.as_ref()) {
                    (Expr::State(u), Expr::State(v)) => Ok(format!(
                        "{}{}{}{}",
                        self.bra(u),
                        self.ops(op),
                        if self.latex {
                            format!("|{}", self.label(v))
                        } else {
                            format!("|{}", v.node)
                        },
                        self.close()
                    )),
                    _ => Err(unrep("matrix element between composite vectors", e)),
                }
            }
            Expr::Operator(op) => {
                let text = match op {
                    OpExpr::Outer { ket, bra } => {
                        return Ok(format!("{}{}", self.ket_part(ket)?, self.bra_part(bra)?))
                    }
                    _ => self.ops(op),
                };
                Ok(if multi && is_bare_op(e) {
                    paren(text)
                } else {
                    text
                })
            }
            Expr::Scalar(s) => {
                if multi {
                    self.scalar_item(s, e)
                } else {
                    self.scalar_standalone(s, e)
                }
            }
            Expr::Reduced(r) => Ok(if self.latex {
                format!(
                    "\\langle {}\\|{}\\|{}\\rangle",
                    self.label(&r.bra),
                    self.label(&r.op),
                    self.label(&r.ket)
                )
            } else {
                format!("<{}||{}||{}>", r.bra, r.op, r.ket)
            }),
            _ => Ok(paren(self.expr(e)?)),
        }
    }

    fn scalar_item(&self, s: &ScalarExpr, at: &Expr) -> R {
        match s {
            ScalarExpr::Expr(e) => match e.as_ref() {
                Expr::ScalarProduct(..) | Expr::MatrixElement { .. } | Expr::Reduced(_) => {
                    self.atom(e, true)
                }
                Expr::Scalar(inner) => self.scalar_item(inner, at),
                _ => Ok(paren(self.expr(e)?)),
            },
            _ => self.scalar_standalone(s, at),
        }
    }

    fn scalar_standalone(&self, s: &ScalarExpr, at: &Expr) -> R {
        match s {
            ScalarExpr::Literal(z) => Ok(format_complex(z.node)),
            ScalarExpr::Symbol(l) => Ok(self.label(l)),
            ScalarExpr::Conj(x) => {
                let inner = self.scalar_standalone(x, at)?;
                Ok(if self.latex {
                    match x.as_ref() {
                        ScalarExpr::Symbol(_) | ScalarExpr::Literal(_) => format!("{inner}^{{*}}"),
                        _ => format!("({inner})^{{*}}"),
                    }
                } else {
                    format!("conj({inner})")
                })
            }
            ScalarExpr::Times(_) => Err(unrep("product of symbolic scalars", at)),
            ScalarExpr::Expr(e) => self.expr(e),
        }
    }

    fn ops(&self, op: &OpExpr) -> String {
        match op {
            OpExpr::Compose(xs) => xs
                .iter()
                .map(|x| match x {
                    OpExpr::Compose(_) => paren(self.ops(x)),
                    _ => self.op_factor(x),
                })
                .collect::<Vec<_>>()
                .join(" "),
            _ => self.op_factor(op),
        }
    }

    fn op_factor(&self, op: &OpExpr) -> String {
        match op {
            OpExpr::Symbol(l) => self.label(l),
            OpExpr::Dagger(inner) => {
                if let OpExpr::Symbol(l) = inner.as_ref() {
                    if let Some(name) = self.ctx.adjoint_names.get(&l.node) {
                        return self.label(name);
                    }
                }
                if self.latex {
                    match inner.as_ref() {
                        OpExpr::Symbol(_) | OpExpr::Identity(_) => {
                            format!("{}^{{\\dagger}}", self.op_factor(inner))
                        }
                        _ => format!("({})^{{\\dagger}}", self.ops(inner)),
                    }
                } else {
                    format!("dag({})", self.ops(inner))
                }
            }
            OpExpr::Identity(b) => match (&b.node, self.latex) {
                (None, _) => "I".to_string(),
                (Some(n), false) => format!("I[{n}]"),
                (Some(n), true) => format!("I_{{{}}}", latex_label(n)),
            },
            OpExpr::Outer { ket, bra } => {
                let k = self
                    .ket_part(ket)
                    .unwrap_or_else(|_| paren(render_slash(ket)));
                let b = self
                    .bra_part(bra)
                    .unwrap_or_else(|_| paren(render_slash(bra)));
                paren(format!("{k}{b}"))
            }
            OpExpr::Compose(_) => paren(self.ops(op)),
        }
    }
}
