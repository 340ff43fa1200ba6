//! Well-formedness rules for expressions against a model's domain facts.
//!
//! | rule | condition |
//! |------|-----------|
//! | BK1  | chained `<u|O|v>` needs `u ∈ D(O†)` and `v ∈ D(O)` |
//! | BK2  | bra action `(<u|O)` needs `u ∈ D(O†)` |
//! | BK3  | chained `<u|K|v>` with anti-linear `K` |
//! | SL1  | `/u/ . O/v/` needs `v ∈ D(O)` |
//! | SL2  | `O/u/ . /v/` needs `u ∈ D(O)` |
//! | SL3  | `O/u/ . O'/v/` needs both |
//! | FN1  | a bra built from an unbounded functional |
//! | RM1  | reduced matrix elements are opaque |
//!
//! An `unknown` membership downgrades the finding to a warning.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::ast::{render_slash, Expr, MatrixOrigin, OpExpr, RenderContext, ScalarExpr};
use crate::model::{power_law_membership, HilbertModel, Membership, OpDefinition};
use crate::parser::Notation;
use crate::span::SourceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Rule {
    BK1,
    BK2,
    BK3,
    SL1,
    SL2,
    SL3,
    FN1,
    RM1,
}

impl Rule {
    pub const ALL: [Rule; 8] = [
        Rule::BK1,
        Rule::BK2,
        Rule::BK3,
        Rule::SL1,
        Rule::SL2,
        Rule::SL3,
        Rule::FN1,
        Rule::RM1,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Rule::BK1 => "BK1",
            Rule::BK2 => "BK2",
            Rule::BK3 => "BK3",
            Rule::SL1 => "SL1",
            Rule::SL2 => "SL2",
            Rule::SL3 => "SL3",
            Rule::FN1 => "FN1",
            Rule::RM1 => "RM1",
        }
    }

    pub fn explain(self) -> &'static str {
        match self {
            Rule::BK1 => {
                "BK1: a chained matrix element <u|O|v> is meaningful only when u is in D(O†) \
                 and v is in D(O) simultaneously. Then (O†u, v) and (u, Ov) both exist and agree, \
                 so the bar may be read either way. If only one membership holds, write the \
                 side that exists explicitly: /u/ . O/v/ needs only v in D(O), and \
                 dag(O)/u/ . /v/ needs only u in D(O†)."
            }
            Rule::BK2 => {
                "BK2: the bra <u|O stands for the covector of O†u, which exists only if \
                 u is in D(O†). When u lies in D(O) but not in D(O†) the expression is \
                 ambiguous and is given no meaning."
            }
            Rule::BK3 => {
                "BK3: for an anti-linear operator K, (K†u, v) equals the complex conjugate of \
                 (u, Kv), so the chained form <u|K|v> cannot stand for both readings. \
                 Write the action explicitly: <u|(K|v>) or the slash form /u/ . K/v/."
            }
            Rule::SL1 => {
                "SL1: /u/ . O/v/ applies O to v, so v must lie in D(O). The left vector is \
                 unrestricted."
            }
            Rule::SL2 => {
                "SL2: O/u/ . /v/ applies O to u, so u must lie in D(O). The right vector is \
                 unrestricted."
            }
            Rule::SL3 => {
                "SL3: O/u/ . O'/v/ applies an operator on each side; u must lie in D(O) and \
                 v in D(O')."
            }
            Rule::FN1 => {
                "FN1: a bra may only be the covector (u, .) of a vector u. A functional F is \
                 unbounded if |F(v)|/|v| has no finite upper bound; by the Schwarz inequality \
                 every covector (u, .) is bounded, so an unbounded F has no representing \
                 vector and <F| is not a bra. Bounded functionals are fine: the Riesz theorem \
                 supplies their vector."
            }
            Rule::RM1 => {
                "RM1: reduced matrix elements /j1//T//j2/ are parsed and rendered but carry no \
                 semantics, so nothing inside them is checked or evaluated."
            }
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown rule `{0}`")]
pub struct UnknownRule(pub String);

impl FromStr for Rule {
    type Err = UnknownRule;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rule::ALL
            .into_iter()
            .find(|r| r.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownRule(s.to_string()))
    }
}

/// Explanation text for a rule id such as `"BK1"`.
pub fn explain(rule: &str) -> Result<&'static str, UnknownRule> {
    Ok(rule.parse::<Rule>()?.explain())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub rule: Rule,
    pub span: Option<SourceSpan>,
    pub message: String,
    /// An equivalent well-formed expression replacing the whole input.
    pub suggestion: Option<Expr>,
}

/// Flat, serializable form of a [`Diagnostic`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRecord {
    pub severity: Severity,
    pub rule: Rule,
    pub line: usize,
    pub column: usize,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    fn position(&self) -> (usize, usize) {
        self.span.map_or((0, 0), |s| (s.line, s.column))
    }

    /// `severity rule line:col message [suggestion]`
    pub fn to_line(&self) -> String {
        let (line, col) = self.position();
        let mut out = format!(
            "{} {} {line}:{col} {}",
            self.severity, self.rule, self.message
        );
        if let Some(s) = &self.suggestion {
            out.push_str(&format!(" [suggestion: {}]", render_slash(s)));
        }
        out
    }

    pub fn to_record(&self) -> DiagnosticRecord {
        let (line, column) = self.position();
        DiagnosticRecord {
            severity: self.severity,
            rule: self.rule,
            line,
            column,
            message: self.message.clone(),
            suggestion: self.suggestion.as_ref().map(render_slash),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error("{}unresolved {what} `{name}`", position(.span))]
    Unresolved {
        what: &'static str,
        name: String,
        span: Option<SourceSpan>,
    },
}

fn position(span: &Option<SourceSpan>) -> String {
    span.map_or(String::new(), |s| format!("{}:{}: ", s.line, s.column))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOptions {
    /// Notation the expression was written in; selects BK2 over SL2 for
    /// left actions.
    pub notation: Notation,
    /// Read `<u|O|v>` as `<u|(O|v>)`. Off by default: the convention does
    /// not make the chained form meaningful when `u ∉ D(O†)`.
    pub operator_acts_right: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            notation: Notation::Slash,
            operator_acts_right: false,
        }
    }
}

pub fn check(e: &Expr, m: &HilbertModel) -> Result<Vec<Diagnostic>, CheckError> {
    check_with(e, m, &CheckOptions::default())
}

pub fn check_with(
    e: &Expr,
    m: &HilbertModel,
    opts: &CheckOptions,
) -> Result<Vec<Diagnostic>, CheckError> {
    let mut c = Checker::new(e, m, opts, true);
    c.expr(e, Pos::Free);
    match c.err {
        Some(err) => Err(err),
        None => Ok(c.diags),
    }
}

/// Well-formed equivalents of the first BK1/BK2 site in `e`, as whole
/// expressions. Empty if there is no such site or no equivalent is
/// well-formed.
pub fn suggest(e: &Expr, m: &HilbertModel) -> Vec<Expr> {
    suggest_with(e, m, &CheckOptions::default())
}

pub fn suggest_with(e: &Expr, m: &HilbertModel, opts: &CheckOptions) -> Vec<Expr> {
    let mut c = Checker::new(e, m, opts, true);
    c.expr(e, Pos::Free);
    c.first_site_candidates.unwrap_or_default()
}

#[derive(Debug, Clone, Copy)]
enum Pos {
    Free,
    Left { pair: bool },
    Right { pair: bool },
    Covector,
}

#[derive(Debug, Clone, Copy)]
enum Prim<'e> {
    Op { name: &'e str, dagger: bool },
    Identity,
    Outer(&'e Expr),
}

impl Prim<'_> {
    fn describe(&self) -> String {
        match self {
            Prim::Op {
                name,
                dagger: false,
            } => name.to_string(),
            Prim::Op { name, dagger: true } => format!("dag({name})"),
            Prim::Identity => "I".to_string(),
            Prim::Outer(_) => "outer product".to_string(),
        }
    }
}

/// Primitive factors of an operator in written order.
fn flatten<'e>(op: &'e OpExpr, dagger: bool, out: &mut Vec<Prim<'e>>) {
    match op {
        OpExpr::Symbol(l) => out.push(Prim::Op {
            name: &l.node,
            dagger,
        }),
        OpExpr::Dagger(x) => flatten(x, !dagger, out),
        OpExpr::Compose(xs) => {
            if dagger {
                xs.iter().rev().for_each(|x| flatten(x, true, out));
            } else {
                xs.iter().for_each(|x| flatten(x, false, out));
            }
        }
        OpExpr::Identity(_) => out.push(Prim::Identity),
        OpExpr::Outer { ket, bra } => out.push(Prim::Outer(if dagger { bra } else { ket })),
    }
}

fn strip_scaled(e: &Expr) -> &Expr {
    match e {
        Expr::Scaled { term, .. } => strip_scaled(term),
        other => other,
    }
}

fn has_application(e: &Expr) -> bool {
    match strip_scaled(e) {
        Expr::OpApply(..) => true,
        Expr::Sum(ts) => ts.iter().any(has_application),
        _ => false,
    }
}

struct Checker<'a> {
    root: &'a Expr,
    m: &'a HilbertModel,
    opts: &'a CheckOptions,
    ctx: RenderContext,
    diags: Vec<Diagnostic>,
    err: Option<CheckError>,
    suggestions: bool,
    first_site_candidates: Option<Vec<Expr>>,
}

struct Finding {
    membership: Membership,
    culprit: Option<String>,
}

impl<'a> Checker<'a> {
    fn new(root: &'a Expr, m: &'a HilbertModel, opts: &'a CheckOptions, suggestions: bool) -> Self {
        Checker {
            root,
            m,
            opts,
            ctx: m.render_context(),
            diags: Vec::new(),
            err: None,
            suggestions,
            first_site_candidates: None,
        }
    }

    fn unresolved(&mut self, what: &'static str, name: &str, span: Option<SourceSpan>) {
        if self.err.is_none() {
            self.err = Some(CheckError::Unresolved {
                what,
                name: name.to_string(),
                span,
            });
        }
    }

    fn push(
        &mut self,
        severity: Severity,
        rule: Rule,
        span: Option<SourceSpan>,
        message: String,
        suggestion: Option<Expr>,
    ) {
        self.diags.push(Diagnostic {
            severity,
            rule,
            span,
            message,
            suggestion,
        });
    }

    fn expr(&mut self, e: &Expr, pos: Pos) {
        match e {
            Expr::State(l) => self.label(&l.node, l.span),
            Expr::Covector(v) => self.expr(v, Pos::Covector),
            Expr::OpApply(op, arg) => {
                self.op(op);
                self.application(e, op, arg, pos);
                self.expr(arg, Pos::Free);
            }
            Expr::ScalarProduct(a, b) => {
                let pair = has_application(a) && has_application(b);
                self.expr(a, Pos::Left { pair });
                self.expr(b, Pos::Right { pair });
            }
            Expr::OuterProduct(a, b) => {
                self.expr(a, Pos::Free);
                self.expr(b, Pos::Free);
            }
            Expr::Scaled { scalar, term, .. } => {
                self.scalar(scalar);
                self.expr(term, pos);
            }
            Expr::Sum(ts) => ts.iter().for_each(|t| self.expr(t, pos)),
            Expr::MatrixElement {
                bra,
                op,
                ket,
                origin,
            } => {
                self.op(op);
                self.expr(bra, Pos::Free);
                self.expr(ket, Pos::Free);
                self.matrix_element(e, bra, op, ket, *origin);
            }
            Expr::Operator(op) => self.op(op),
            Expr::Scalar(s) => self.scalar(s),
            Expr::Reduced(r) => self.push(
                Severity::Warning,
                Rule::RM1,
                r.span,
                format!(
                    "reduced matrix element /{}//{}//{}/ is opaque; nothing inside it is checked",
                    r.bra, r.op, r.ket
                ),
                None,
            ),
        }
    }

    fn scalar(&mut self, s: &ScalarExpr) {
        match s {
            ScalarExpr::Literal(_) | ScalarExpr::Symbol(_) => {}
            ScalarExpr::Conj(x) => self.scalar(x),
            ScalarExpr::Times(xs) => xs.iter().for_each(|x| self.scalar(x)),
            ScalarExpr::Expr(e) => self.expr(e, Pos::Free),
        }
    }

    fn op(&mut self, op: &OpExpr) {
        match op {
            OpExpr::Symbol(l) => {
                if !self.m.operators.contains_key(&l.node) {
                    self.unresolved("operator", &l.node, l.span);
                }
            }
            OpExpr::Dagger(x) => self.op(x),
            OpExpr::Compose(xs) => xs.iter().for_each(|x| self.op(x)),
            OpExpr::Identity(b) => {
                if let Some(name) = &b.node {
                    if !self.m.bases.contains_key(name) {
                        self.unresolved("basis", name, b.span);
                    }
                }
            }
            OpExpr::Outer { ket, bra } => {
                self.expr(ket, Pos::Free);
                self.expr(bra, Pos::Free);
            }
        }
    }

    fn label(&mut self, label: &str, span: Option<SourceSpan>) {
        if self.m.states.contains_key(label) {
            return;
        }
        match self.m.functionals.get(label) {
            None => self.unresolved("state", label, span),
            Some(f) if f.is_bounded() => self.push(
                Severity::Info,
                Rule::FN1,
                span,
                format!("`{label}` is a bounded functional; it stands for its representing vector"),
                None,
            ),
            Some(_) => self.push(
                Severity::Error,
                Rule::FN1,
                span,
                format!("`{label}` is an unbounded functional; no vector represents it, so it cannot be used as a bra or ket"),
                None,
            ),
        }
    }

    fn diag_p(&self, name: &str) -> Option<f64> {
        match &self.m.operators.get(name)?.definition {
            OpDefinition::Diagonal { p } => Some(*p),
            OpDefinition::Matrix(_) => None,
        }
    }

    /// Power-law decay exponent of a vector expression, when derivable.
    fn decay(&self, e: &Expr) -> Option<f64> {
        match e {
            Expr::State(l) => self.m.decay(&l.node),
            Expr::Scaled { term, .. } => self.decay(term),
            Expr::OpApply(op, x) => {
                let mut prims = Vec::new();
                flatten(op, false, &mut prims);
                let mut q = self.decay(x);
                for prim in prims.iter().rev() {
                    q = self.step_decay(prim, q);
                }
                q
            }
            Expr::Sum(ts) => ts
                .iter()
                .map(|t| self.decay(t))
                .try_fold(f64::INFINITY, |acc, q| q.map(|q| acc.min(q))),
            _ => None,
        }
    }

    fn step_decay(&self, prim: &Prim, q: Option<f64>) -> Option<f64> {
        match prim {
            Prim::Identity => q,
            Prim::Outer(k) => self.decay(k),
            Prim::Op { name, .. } => Some(q? - self.diag_p(name)?),
        }
    }

    /// Whether `arg` lies in the domain of every factor as the chain acts.
    fn chain(&self, prims: &[Prim], arg: &Expr) -> Finding {
        let mut finding = Finding {
            membership: Membership::In,
            culprit: None,
        };
        if self.m.is_finite() {
            return finding;
        }
        let mut label = match strip_scaled(arg) {
            Expr::State(l) => Some(l.node.as_str()),
            _ => None,
        };
        let mut q = self.decay(arg);
        for prim in prims.iter().rev() {
            let m = match prim {
                Prim::Identity | Prim::Outer(_) => Membership::In,
                Prim::Op { name, dagger } => match label {
                    Some(l) => self
                        .m
                        .domain_membership(l, name, *dagger)
                        .unwrap_or(Membership::Unknown),
                    None => match (q, self.diag_p(name)) {
                        (Some(q), Some(p)) => power_law_membership(p, q),
                        _ => Membership::Unknown,
                    },
                },
            };
            match m {
                Membership::Out => {
                    return Finding {
                        membership: Membership::Out,
                        culprit: Some(prim.describe()),
                    }
                }
                Membership::Unknown if finding.membership == Membership::In => {
                    finding = Finding {
                        membership: Membership::Unknown,
                        culprit: Some(prim.describe()),
                    };
                }
                _ => {}
            }
            q = self.step_decay(prim, q);
            label = None;
        }
        finding
    }

    fn chain_of(&self, op: &OpExpr, dagger: bool, arg: &Expr) -> Finding {
        let mut prims = Vec::new();
        flatten(op, dagger, &mut prims);
        self.chain(&prims, arg)
    }

    /// Keeps the candidates whose replaced site checks without errors.
    fn validate(&mut self, site: &Expr, candidates: Vec<Expr>, record: bool) -> Option<Expr> {
        if !self.suggestions {
            return None;
        }
        let ok: Vec<Expr> = candidates
            .into_iter()
            .filter(|alt| {
                let mut c = Checker::new(alt, self.m, self.opts, false);
                c.expr(alt, Pos::Free);
                c.err.is_none() && !c.diags.iter().any(Diagnostic::is_error)
            })
            .map(|alt| self.root.replace_node(site, &alt))
            .collect();
        let first = ok.first().cloned();
        if record && self.first_site_candidates.is_none() {
            self.first_site_candidates = Some(ok);
        }
        first
    }

    fn application(&mut self, node: &Expr, op: &OpExpr, arg: &Expr, pos: Pos) {
        let finding = self.chain_of(op, false, arg);
        if finding.membership == Membership::In {
            return;
        }
        let braket = self.opts.notation == Notation::Braket;
        let rule = match pos {
            Pos::Left { pair: true } | Pos::Right { pair: true } => Rule::SL3,
            Pos::Left { .. } | Pos::Covector if braket => Rule::BK2,
            Pos::Left { .. } | Pos::Covector => Rule::SL2,
            Pos::Right { .. } | Pos::Free => Rule::SL1,
        };
        let culprit = finding.culprit.unwrap_or_default();
        let arg_text = render_slash(arg);
        let (severity, message) = match finding.membership {
            Membership::Out => (
                Severity::Error,
                format!(
                    "`{arg_text}` is not in D({culprit}), so `{}` is undefined",
                    render_slash(node)
                ),
            ),
            _ => (
                Severity::Warning,
                format!("cannot decide whether `{arg_text}` is in D({culprit})"),
            ),
        };
        let suggestion = if severity == Severity::Error {
            self.application_suggestion(node, op, arg, pos, rule)
        } else {
            None
        };
        self.push(severity, rule, node.span(), message, suggestion);
    }

    /// For a one-sided application inside a scalar product, the mirrored
    /// form moving the operator to the other slot.
    fn application_suggestion(
        &mut self,
        node: &Expr,
        op: &OpExpr,
        arg: &Expr,
        pos: Pos,
        rule: Rule,
    ) -> Option<Expr> {
        if self.ctx.is_antilinear(op) || matches!(rule, Rule::SL3) {
            return None;
        }
        let parent = find_parent_sp(self.root, node)?;
        let Expr::ScalarProduct(a, b) = parent else {
            return None;
        };
        let alt = match pos {
            Pos::Left { .. } if std::ptr::eq(&**a, node) => Expr::sp(
                arg.clone(),
                Expr::apply(op.clone().left_action(), (**b).clone()),
            ),
            Pos::Right { .. } if std::ptr::eq(&**b, node) => Expr::sp(
                Expr::apply(op.clone().left_action(), (**a).clone()),
                arg.clone(),
            ),
            _ => return None,
        };
        self.validate(parent, vec![alt], rule == Rule::BK2)
    }

    fn matrix_element(
        &mut self,
        node: &Expr,
        bra: &Expr,
        op: &OpExpr,
        ket: &Expr,
        origin: MatrixOrigin,
    ) {
        let right = self.chain_of(op, false, ket);
        let op_text = render_slash(&Expr::Operator(op.clone()));
        let ket_text = render_slash(ket);
        let bra_text = render_slash(bra);
        if origin == MatrixOrigin::SlashDotless {
            if right.membership != Membership::In {
                let culprit = right.culprit.unwrap_or_default();
                let (severity, message) = match right.membership {
                    Membership::Out => (
                        Severity::Error,
                        format!("`{ket_text}` is not in D({culprit})"),
                    ),
                    _ => (
                        Severity::Warning,
                        format!("cannot decide whether `{ket_text}` is in D({culprit})"),
                    ),
                };
                self.push(
                    severity,
                    Rule::SL1,
                    ket.span().or(node.span()),
                    message,
                    None,
                );
            }
            return;
        }
        let anti = self.ctx.is_antilinear(op);
        let right_form = Expr::sp(bra.clone(), Expr::apply(op.clone(), ket.clone()));
        let left_form = Expr::sp(
            Expr::apply(op.clone().left_action(), bra.clone()),
            ket.clone(),
        );
        if anti {
            let suggestion = self.validate(node, vec![right_form.clone()], false);
            self.push(
                Severity::Error,
                Rule::BK3,
                node.span(),
                format!("`{op_text}` is anti-linear, so the chained form is ambiguous; write the action explicitly"),
                suggestion,
            );
        }
        let left = if self.opts.operator_acts_right {
            Finding {
                membership: Membership::In,
                culprit: None,
            }
        } else {
            self.chain_of(op, true, bra)
        };
        let out_side = if left.membership == Membership::Out {
            Some((&left, &bra_text, bra))
        } else if right.membership == Membership::Out {
            Some((&right, &ket_text, ket))
        } else {
            None
        };
        if let Some((finding, text, side)) = out_side {
            let candidates = if anti {
                vec![right_form]
            } else {
                vec![right_form, left_form]
            };
            let suggestion = self.validate(node, candidates, true);
            let culprit = finding.culprit.clone().unwrap_or_default();
            self.push(
                Severity::Error,
                Rule::BK1,
                side.span().or(node.span()),
                format!(
                    "<{bra_text}|{op_text}|{ket_text}> needs {bra_text} in D(dag({op_text})) and {ket_text} in D({op_text}) at once; `{text}` is not in D({culprit})"
                ),
                suggestion,
            );
            return;
        }
        let unknown = [&left, &right]
            .into_iter()
            .find(|f| f.membership == Membership::Unknown);
        if let Some(f) = unknown {
            self.push(
                Severity::Warning,
                Rule::BK1,
                node.span(),
                format!(
                    "cannot decide whether both sides of the chained element lie in the domain of {}",
                    f.culprit.clone().unwrap_or_default()
                ),
                None,
            );
        }
    }
}

fn find_parent_sp<'e>(root: &'e Expr, child: &Expr) -> Option<&'e Expr> {
    let mut found = None;
    fn walk<'e>(e: &'e Expr, child: &Expr, found: &mut Option<&'e Expr>) {
        if found.is_some() {
            return;
        }
        if let Expr::ScalarProduct(a, b) = e {
            if std::ptr::eq(&**a, child) || std::ptr::eq(&**b, child) {
                *found = Some(e);
                return;
            }
        }
        for c in e.children() {
            walk(c, child, found);
        }
    }
    walk(root, child, &mut found);
    found
}
