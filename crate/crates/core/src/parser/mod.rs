//! Parsers for slash and bra-ket notation.
//!
//! Both notations produce the same [`Expr`] tree. Every leaf carries a
//! [`SourceSpan`]; the grammar needs at most two tokens of lookahead.

mod lexer;

use std::fmt;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::ast::{Attachment, Expr, Kind, MatrixOrigin, OpExpr, ReducedParts, ScalarExpr};
use crate::span::{SourceSpan, Spanned};

pub use lexer::detect;
use lexer::{Tok, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Notation {
    Slash,
    Braket,
}

impl fmt::Display for Notation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Notation::Slash => "slash",
            Notation::Braket => "braket",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NotationHint {
    #[default]
    Auto,
    Slash,
    Braket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParseErrorKind {
    Syntax,
    MixedNotation,
    UnbalancedParens,
    Type,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[error("{}:{}: {message}", span.line, span.column)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub message: String,
    pub span: SourceSpan,
    /// Token classes that would have been accepted at `span`.
    pub expected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseResult {
    pub expr: Expr,
    pub notation: Notation,
    pub warnings: Vec<String>,
}

pub fn parse(text: &str, hint: NotationHint) -> Result<ParseResult, ParseError> {
    parse_at(text, hint, 1, 0)
}

pub fn parse_slash(text: &str) -> Result<Expr, ParseError> {
    parse(text, NotationHint::Slash).map(|r| r.expr)
}

pub fn parse_braket(text: &str) -> Result<Expr, ParseError> {
    parse(text, NotationHint::Braket).map(|r| r.expr)
}

/// One expression per nonblank line; lines starting with `#` are skipped.
/// A bad line does not stop the following ones.
pub fn parse_file(text: &str, hint: NotationHint) -> Vec<(usize, Result<ParseResult, ParseError>)> {
    let mut out = Vec::new();
    let mut offset = 0;
    for (i, line) in text.split('\n').enumerate() {
        let trimmed = line.trim();
        if !trimmed.is_empty() && !trimmed.starts_with('#') {
            out.push((
                i + 1,
                parse_at(line.trim_end_matches('\r'), hint, i + 1, offset),
            ));
        }
        offset += line.len() + 1;
    }
    out
}

fn parse_at(
    text: &str,
    hint: NotationHint,
    line: usize,
    offset: usize,
) -> Result<ParseResult, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError {
            kind: ParseErrorKind::Empty,
            message: "empty expression".into(),
            span: SourceSpan::new(offset, offset, line, 1),
            expected: Vec::new(),
        });
    }
    let notation = match hint {
        NotationHint::Auto => detect(text),
        NotationHint::Slash => Notation::Slash,
        NotationHint::Braket => Notation::Braket,
    };
    let toks = lexer::tokenize(text, notation, line, offset)?;
    let mut p = Parser {
        toks,
        pos: 0,
        notation,
        warnings: Vec::new(),
        depth: 0,
    };
    let item = p.expr()?;
    if p.peek() != &Tok::Eof {
        return Err(match p.peek() {
            Tok::RParen => p.err_kind(ParseErrorKind::UnbalancedParens, "unmatched ')'"),
            _ => p.unexpected(&["'+'", "end of input"]),
        });
    }
    Ok(ParseResult {
        expr: item.expr,
        notation,
        warnings: p.warnings,
    })
}

/// A parsed fragment plus whether it was a lone identifier, which reads as
/// an operator on its own and as a scalar constant inside a chain.
struct Item {
    expr: Expr,
    bare: bool,
    span: SourceSpan,
}

impl Item {
    fn new(expr: Expr, span: SourceSpan) -> Self {
        Item {
            expr,
            bare: false,
            span,
        }
    }

    fn kind(&self) -> Kind {
        self.expr.kind()
    }

    /// Reads a lone identifier as a scalar constant.
    fn coerce_scalar(self) -> Item {
        if !self.bare {
            return self;
        }
        match self.expr {
            Expr::Operator(OpExpr::Symbol(l)) => {
                Item::new(Expr::Scalar(ScalarExpr::Symbol(l)), self.span)
            }
            expr => Item {
                expr,
                bare: false,
                span: self.span,
            },
        }
    }
}

const MAX_DEPTH: usize = 256;

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    notation: Notation,
    warnings: Vec<String>,
    depth: usize,
}

type PResult<T> = Result<T, ParseError>;

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Vector => "a vector",
        Kind::Covector => "a covector",
        Kind::Scalar => "a scalar",
        Kind::Operator => "an operator",
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        let i = (self.pos + 1).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_kind(&self, kind: ParseErrorKind, msg: impl Into<String>) -> ParseError {
        ParseError {
            kind,
            message: msg.into(),
            span: self.span(),
            expected: Vec::new(),
        }
    }

    fn err_at(&self, kind: ParseErrorKind, span: SourceSpan, msg: impl Into<String>) -> ParseError {
        ParseError {
            kind,
            message: msg.into(),
            span,
            expected: Vec::new(),
        }
    }

    fn unexpected(&self, expected: &[&str]) -> ParseError {
        ParseError {
            kind: ParseErrorKind::Syntax,
            message: format!(
                "unexpected {}, expected {}",
                self.peek().describe(),
                expected.join(" or ")
            ),
            span: self.span(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn type_err(&self, span: SourceSpan, msg: impl Into<String>) -> ParseError {
        self.err_at(ParseErrorKind::Type, span, msg)
    }

    fn expect_vector(&self, item: &Item, role: &str) -> PResult<()> {
        if item.kind() == Kind::Vector {
            Ok(())
        } else {
            Err(self.type_err(
                item.span,
                format!("{role} must be a vector, found {}", kind_name(item.kind())),
            ))
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.err_kind(ParseErrorKind::Syntax, "expression nested too deeply"));
        }
        Ok(())
    }

    // ---- shared structure -------------------------------------------------

    fn expr(&mut self) -> PResult<Item> {
        let first = self.chain()?;
        if self.peek() != &Tok::Plus {
            return Ok(first);
        }
        let mut terms = vec![first];
        while self.peek() == &Tok::Plus {
            self.advance();
            terms.push(self.chain()?);
        }
        if terms.iter().any(|t| t.kind() == Kind::Scalar) {
            terms = terms.into_iter().map(Item::coerce_scalar).collect();
        }
        let k = terms[0].kind();
        if let Some(bad) = terms.iter().find(|t| t.kind() != k) {
            return Err(self.type_err(
                bad.span,
                format!("sum mixes {} with {}", kind_name(k), kind_name(bad.kind())),
            ));
        }
        let span = terms[0].span.join(terms[terms.len() - 1].span);
        Ok(Item::new(
            Expr::Sum(terms.into_iter().map(|t| t.expr).collect()),
            span,
        ))
    }

    fn chain(&mut self) -> PResult<Item> {
        let sep = match self.notation {
            Notation::Slash => Tok::Delim,
            Notation::Braket => Tok::Star,
        };
        let mut items = vec![self.chain_item()?];
        while self.peek() == &sep {
            self.advance();
            items.push(self.chain_item()?);
        }
        if items.len() == 1 {
            return Ok(items.pop().unwrap());
        }
        let items: Vec<Item> = items.into_iter().map(Item::coerce_scalar).collect();
        self.assemble(items)
    }

    fn chain_item(&mut self) -> PResult<Item> {
        match self.notation {
            Notation::Slash => self.dotted(),
            Notation::Braket => self.seq(),
        }
    }

    /// Leading scalars attach to everything after them; otherwise the chain
    /// folds left: vector-scalar is a trailing scale, vector-covector an
    /// outer product.
    fn assemble(&self, mut items: Vec<Item>) -> PResult<Item> {
        if items.len() == 1 {
            return Ok(items.pop().unwrap());
        }
        if items[0].kind() == Kind::Scalar {
            let first = items.remove(0);
            let rest = self.assemble(items)?;
            let span = first.span.join(rest.span);
            return Ok(Item::new(
                Expr::scaled(
                    ScalarExpr::from_expr(first.expr),
                    rest.expr,
                    Attachment::Delimited,
                ),
                span,
            ));
        }
        let mut it = items.into_iter();
        let mut acc = it.next().unwrap();
        for next in it {
            let span = acc.span.join(next.span);
            acc = match (acc.kind(), next.kind()) {
                (_, Kind::Scalar) => Item::new(
                    Expr::scaled(
                        ScalarExpr::from_expr(next.expr),
                        acc.expr,
                        Attachment::DelimitedTrailing,
                    ),
                    span,
                ),
                (Kind::Vector, Kind::Covector) => {
                    let Expr::Covector(inner) = next.expr else {
                        return Err(self.type_err(next.span, "expected a covector"));
                    };
                    Item::new(Expr::OuterProduct(Box::new(acc.expr), inner), span)
                }
                (a, b) => {
                    return Err(self.type_err(
                        next.span,
                        format!("cannot follow {} with {} here", kind_name(a), kind_name(b)),
                    ))
                }
            };
        }
        Ok(acc)
    }

    fn group(&mut self) -> PResult<Item> {
        let mut g = self.group_keep_bare()?;
        g.bare = false;
        Ok(g)
    }

    /// A parenthesized expression, remembering whether it held a lone
    /// identifier.
    fn group_keep_bare(&mut self) -> PResult<Item> {
        let open = self.span();
        self.advance();
        self.enter()?;
        let inner = self.expr()?;
        self.depth -= 1;
        if self.peek() != &Tok::RParen {
            if self.peek() == &Tok::Eof {
                return Err(self.err_at(ParseErrorKind::UnbalancedParens, open, "unclosed '('"));
            }
            return Err(self.unexpected(&["')'"]));
        }
        let close = self.advance().span;
        Ok(Item {
            expr: inner.expr,
            bare: inner.bare,
            span: open.join(close),
        })
    }

    fn literal(&mut self) -> Item {
        let t = self.advance();
        let z = match t.tok {
            Tok::Complex(z) => z,
            Tok::Number(x) => Complex64::new(x, 0.0),
            _ => unreachable!("literal called on non-literal"),
        };
        Item::new(
            Expr::Scalar(ScalarExpr::Literal(Spanned::at(z, t.span))),
            t.span,
        )
    }

    fn reduced(&mut self) -> Item {
        let t = self.advance();
        let Tok::Reduced(bra, op, ket) = t.tok else {
            unreachable!("reduced called on another token")
        };
        self.warnings.push(format!(
            "reduced matrix element {bra} | {op} | {ket} is kept as an opaque atom"
        ));
        Item::new(
            Expr::Reduced(Spanned::at(ReducedParts { bra, op, ket }, t.span)),
            t.span,
        )
    }

    fn conj(&mut self) -> PResult<Item> {
        let start = self.advance().span;
        if self.peek() != &Tok::LParen {
            return Err(self.unexpected(&["'('"]));
        }
        let g = self.group_keep_bare()?.coerce_scalar();
        if g.kind() != Kind::Scalar {
            return Err(self.type_err(g.span, "conj() takes a scalar"));
        }
        let span = start.join(g.span);
        Ok(Item::new(
            Expr::from_scalar(ScalarExpr::from_expr(g.expr).conj()),
            span,
        ))
    }

    /// One operator factor: symbol, `dag(..)`, `I`, `I[b]`, with postfix `†`.
    fn op_factor(&mut self) -> PResult<(OpExpr, SourceSpan)> {
        let t = self.advance();
        let Tok::Ident(name) = t.tok else {
            unreachable!("op_factor called on non-identifier")
        };
        let mut span = t.span;
        let mut op = match name.as_str() {
            "dag" if self.peek() == &Tok::LParen => {
                let g = self.group()?;
                span = span.join(g.span);
                OpExpr::dagger(self.to_op(g)?)
            }
            "I" if self.peek() == &Tok::LBracket => {
                self.advance();
                let b = self.advance();
                let Tok::Ident(basis) = b.tok else {
                    return Err(self.err_at(
                        ParseErrorKind::Syntax,
                        b.span,
                        "expected a basis name",
                    ));
                };
                if self.peek() != &Tok::RBracket {
                    return Err(self.unexpected(&["']'"]));
                }
                let close = self.advance().span;
                span = span.join(close);
                OpExpr::Identity(Spanned::at(Some(basis), span))
            }
            "I" => OpExpr::Identity(Spanned::at(None, span)),
            _ => OpExpr::Symbol(Spanned::at(name, span)),
        };
        while self.peek() == &Tok::Dagger {
            span = span.join(self.advance().span);
            op = OpExpr::dagger(op);
        }
        Ok((op, span))
    }

    fn to_op(&self, item: Item) -> PResult<OpExpr> {
        match item.expr {
            Expr::Operator(op) => Ok(op),
            Expr::OuterProduct(k, b) => Ok(OpExpr::Outer { ket: k, bra: b }),
            other => Err(self.type_err(
                item.span,
                format!("expected an operator, found {}", kind_name(other.kind())),
            )),
        }
    }

    fn op_convertible(e: &Expr) -> bool {
        matches!(e, Expr::Operator(_) | Expr::OuterProduct(..))
    }

    fn starts_op_factor(&self) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s != "conj")
    }

    // ---- slash ------------------------------------------------------------

    fn dotted(&mut self) -> PResult<Item> {
        let left = self.unit()?;
        if self.peek() != &Tok::Dot {
            return Ok(left);
        }
        let dot = self.advance().span;
        if matches!(self.peek(), Tok::Delim | Tok::RParen | Tok::Plus | Tok::Eof) {
            self.expect_vector(&left, "the operand of a trailing dot")?;
            let span = left.span.join(dot);
            return Ok(Item::new(Expr::covector(left.expr), span));
        }
        let right = self.unit()?;
        self.expect_vector(&left, "the left side of a scalar product")?;
        self.expect_vector(&right, "the right side of a scalar product")?;
        let span = left.span.join(right.span);
        Ok(Item::new(Expr::sp(left.expr, right.expr), span))
    }

    fn starts_unit(&self) -> bool {
        match self.peek() {
            Tok::State(_) | Tok::LParen | Tok::Ket(_) | Tok::Bra(_) => true,
            Tok::Ident(s) => s != "conj",
            _ => false,
        }
    }

    fn unit(&mut self) -> PResult<Item> {
        self.enter()?;
        let r = self.unit_inner();
        self.depth -= 1;
        r
    }

    fn unit_inner(&mut self) -> PResult<Item> {
        match self.peek().clone() {
            Tok::State(label) => {
                let t = self.advance();
                let state = Expr::State(Spanned::at(label, t.span));
                if self.starts_op_factor() {
                    return self.dotless(state, t.span);
                }
                Ok(Item::new(state, t.span))
            }
            Tok::Reduced(..) => Ok(self.reduced()),
            Tok::Complex(_) | Tok::Number(_) => {
                let lit = self.literal();
                if self.peek() == &Tok::Star {
                    return self.sfactors(lit);
                }
                if self.starts_unit() {
                    return self.bound(lit);
                }
                Ok(lit)
            }
            Tok::Ident(s) if s == "conj" => {
                let c = self.conj()?;
                if self.peek() == &Tok::Star {
                    return self.sfactors(c);
                }
                Ok(c)
            }
            Tok::Ident(s) if !matches!(s.as_str(), "dag" | "I") && self.peek2() == &Tok::Star => {
                let t = self.advance();
                let sym = Item::new(
                    Expr::Scalar(ScalarExpr::Symbol(Spanned::at(s, t.span))),
                    t.span,
                );
                self.sfactors(sym)
            }
            Tok::Ident(_) | Tok::LParen => self.opchain(Vec::new()),
            _ => Err(self.unexpected(&["a state", "an operator", "a scalar", "'('"])),
        }
    }

    /// `/u/ O /v/` without a dot.
    fn dotless(&mut self, bra: Expr, start: SourceSpan) -> PResult<Item> {
        let mut factors = Vec::new();
        while self.starts_op_factor() {
            factors.push(self.op_factor()?.0);
        }
        let Tok::State(label) = self.peek().clone() else {
            return Err(self
                .err_at(
                    ParseErrorKind::Syntax,
                    self.span(),
                    "a dotless matrix element needs exactly one operator chain between two states",
                )
                .with_expected(&["state"]));
        };
        let t = self.advance();
        let ket = Expr::State(Spanned::at(label, t.span));
        Ok(Item::new(
            Expr::matrix_element(
                bra,
                OpExpr::compose(factors),
                ket,
                MatrixOrigin::SlashDotless,
            ),
            start.join(t.span),
        ))
    }

    /// `lit unit`: a scalar bound to the state that follows.
    fn bound(&mut self, scalar: Item) -> PResult<Item> {
        let term = match self.notation {
            Notation::Slash => self.unit()?,
            Notation::Braket => self.ket_unit()?,
        };
        self.expect_vector(&term, "a bound scalar's term")?;
        let span = scalar.span.join(term.span);
        Ok(Item::new(
            Expr::scaled(
                ScalarExpr::from_expr(scalar.expr),
                term.expr,
                Attachment::BoundToState,
            ),
            span,
        ))
    }

    /// `a * b * ... [* unit]`; a trailing vector makes it a bound scale.
    fn sfactors(&mut self, first: Item) -> PResult<Item> {
        let mut span = first.span;
        let mut factors = vec![ScalarExpr::from_expr(first.expr)];
        while self.peek() == &Tok::Star {
            self.advance();
            let terminator = |t: &Tok| {
                matches!(
                    t,
                    Tok::Star | Tok::Delim | Tok::RParen | Tok::Plus | Tok::Eof | Tok::Dot
                )
            };
            match self.peek().clone() {
                Tok::Ident(s) if s == "conj" => {
                    let c = self.conj()?;
                    span = span.join(c.span);
                    factors.push(ScalarExpr::from_expr(c.expr));
                }
                Tok::Ident(s) if !matches!(s.as_str(), "dag" | "I") && terminator(self.peek2()) => {
                    let t = self.advance();
                    span = span.join(t.span);
                    factors.push(ScalarExpr::Symbol(Spanned::at(s, t.span)));
                }
                Tok::Complex(_) | Tok::Number(_) => {
                    let save = self.pos;
                    let lit = self.literal();
                    if self.starts_unit() {
                        self.pos = save;
                        return self.finish_bound(factors, span);
                    }
                    span = span.join(lit.span);
                    factors.push(ScalarExpr::from_expr(lit.expr));
                }
                Tok::LParen => {
                    let save = self.pos;
                    let g = self.group()?.coerce_scalar();
                    if g.kind() == Kind::Scalar {
                        span = span.join(g.span);
                        factors.push(ScalarExpr::from_expr(g.expr));
                    } else {
                        self.pos = save;
                        return self.finish_bound(factors, span);
                    }
                }
                _ => return self.finish_bound(factors, span),
            }
        }
        Ok(Item::new(Expr::Scalar(ScalarExpr::Times(factors)), span))
    }

    fn finish_bound(&mut self, mut factors: Vec<ScalarExpr>, span: SourceSpan) -> PResult<Item> {
        let scalar = if factors.len() == 1 {
            factors.pop().unwrap()
        } else {
            ScalarExpr::Times(factors)
        };
        let term = self.unit()?;
        self.expect_vector(&term, "a bound scalar's term")?;
        let span = span.join(term.span);
        Ok(Item::new(
            Expr::scaled(scalar, term.expr, Attachment::BoundToState),
            span,
        ))
    }

    /// Operator factors, optionally applied to a following unit. A lone
    /// parenthesized group comes back unchanged.
    fn opchain(&mut self, mut factors: Vec<(OpExpr, SourceSpan)>) -> PResult<Item> {
        let mut lone_group: Option<Item> = None;
        let mut bare = false;
        loop {
            if self.starts_op_factor() {
                let single_ident = factors.is_empty()
                    && matches!(self.peek(), Tok::Ident(s) if s != "dag" && s != "I");
                factors.push(self.op_factor()?);
                bare = single_ident
                    && factors.len() == 1
                    && self.toks[self.pos - 1].tok != Tok::Dagger;
                lone_group = None;
                continue;
            }
            if self.peek() == &Tok::LParen {
                let g = self.group()?;
                if Self::op_convertible(&g.expr) {
                    let span = g.span;
                    let first = factors.is_empty();
                    factors.push((self.to_op(Item::new(g.expr.clone(), span))?, span));
                    lone_group = if first { Some(g) } else { None };
                    bare = false;
                    continue;
                }
                if factors.is_empty() {
                    let g = g.coerce_scalar();
                    if self.notation == Notation::Slash
                        && g.kind() == Kind::Scalar
                        && self.peek() == &Tok::Star
                    {
                        return self.sfactors(g);
                    }
                    return Ok(g);
                }
                self.expect_vector(&g, "an operator's argument")?;
                return Ok(self.apply(factors, g));
            }
            break;
        }
        if factors.is_empty() {
            return Err(self.unexpected(&["an operator"]));
        }
        let arg_follows = match self.notation {
            Notation::Slash => matches!(
                self.peek(),
                Tok::State(_) | Tok::Complex(_) | Tok::Number(_)
            ),
            Notation::Braket => {
                matches!(self.peek(), Tok::Ket(_) | Tok::Complex(_) | Tok::Number(_))
            }
        };
        if arg_follows {
            let arg = match self.notation {
                Notation::Slash => self.unit()?,
                Notation::Braket => self.ket_unit()?,
            };
            self.expect_vector(&arg, "an operator's argument")?;
            return Ok(self.apply(factors, arg));
        }
        if factors.len() == 1 {
            if let Some(g) = lone_group {
                return Ok(g);
            }
        }
        let span = factors[0].1.join(factors[factors.len() - 1].1);
        let op = OpExpr::compose(factors.into_iter().map(|f| f.0).collect());
        Ok(Item {
            expr: Expr::Operator(op),
            bare,
            span,
        })
    }

    fn apply(&self, factors: Vec<(OpExpr, SourceSpan)>, arg: Item) -> Item {
        let span = factors[0].1.join(arg.span);
        let op = OpExpr::compose(factors.into_iter().map(|f| f.0).collect());
        Item::new(Expr::apply(op, arg.expr), span)
    }

    // ---- bra-ket ----------------------------------------------------------

    /// Juxtaposed pieces, reduced left to right.
    fn seq(&mut self) -> PResult<Item> {
        let mut pieces = vec![self.piece()?];
        while !matches!(self.peek(), Tok::Star | Tok::Plus | Tok::RParen | Tok::Eof) {
            pieces.push(self.piece()?);
        }
        if pieces.len() == 1 {
            return Ok(pieces.pop().unwrap());
        }
        let mut it = pieces.into_iter();
        let mut acc = it.next().unwrap();
        for next in it {
            acc = self.juxtapose(acc, next)?;
        }
        Ok(acc)
    }

    fn juxtapose(&self, left: Item, right: Item) -> PResult<Item> {
        let span = left.span.join(right.span);
        let expr = match (left.kind(), right.kind()) {
            (Kind::Covector, Kind::Vector) => {
                let Expr::Covector(inner) = left.expr else {
                    return Err(self.type_err(left.span, "expected a bra"));
                };
                Expr::ScalarProduct(inner, Box::new(right.expr))
            }
            (Kind::Vector, Kind::Covector) => {
                let Expr::Covector(inner) = right.expr else {
                    return Err(self.type_err(right.span, "expected a bra"));
                };
                Expr::OuterProduct(Box::new(left.expr), inner)
            }
            (Kind::Vector, Kind::Scalar) => Expr::scaled(
                ScalarExpr::from_expr(right.expr),
                left.expr,
                Attachment::DelimitedTrailing,
            ),
            (Kind::Operator, Kind::Vector) if Self::op_convertible(&left.expr) => {
                let op = self.to_op(left)?;
                Expr::apply(op, right.expr)
            }
            (a, b) => {
                return Err(self.type_err(
                    right.span,
                    format!(
                        "cannot juxtapose {} and {}; use '*' to attach a scalar",
                        kind_name(a),
                        kind_name(b)
                    ),
                ))
            }
        };
        Ok(Item::new(expr, span))
    }

    fn piece(&mut self) -> PResult<Item> {
        self.enter()?;
        let r = self.piece_inner();
        self.depth -= 1;
        r
    }

    fn piece_inner(&mut self) -> PResult<Item> {
        match self.peek().clone() {
            Tok::Ket(label) => {
                let t = self.advance();
                Ok(Item::new(Expr::State(Spanned::at(label, t.span)), t.span))
            }
            Tok::BraKet(a, b) => {
                let t = self.advance();
                let (sa, sb) = split_braket_span(t.span, &a);
                Ok(Item::new(
                    Expr::sp(
                        Expr::State(Spanned::at(a, sa)),
                        Expr::State(Spanned::at(b, sb)),
                    ),
                    t.span,
                ))
            }
            Tok::Reduced(..) => Ok(self.reduced()),
            Tok::Bra(label) => self.bra(label),
            Tok::Complex(_) | Tok::Number(_) => {
                let lit = self.literal();
                if matches!(self.peek(), Tok::Ket(_) | Tok::LParen) || self.starts_op_factor() {
                    return self.bound(lit);
                }
                Ok(lit)
            }
            Tok::Ident(s) if s == "conj" => self.conj(),
            Tok::Ident(_) | Tok::LParen => self.opchain(Vec::new()),
            _ => Err(self.unexpected(&["a ket", "a bra", "an operator", "a scalar", "'('"])),
        }
    }

    /// The term after a bound literal or an operator chain in bra-ket.
    fn ket_unit(&mut self) -> PResult<Item> {
        match self.peek().clone() {
            Tok::Ket(label) => {
                let t = self.advance();
                Ok(Item::new(Expr::State(Spanned::at(label, t.span)), t.span))
            }
            Tok::Complex(_) | Tok::Number(_) => {
                let lit = self.literal();
                self.bound(lit)
            }
            Tok::Ident(_) | Tok::LParen => self.opchain(Vec::new()),
            _ => Err(self.unexpected(&["a ket", "'('"])),
        }
    }

    /// `<u|`, `<u|X`, `<u|X|v>`.
    fn bra(&mut self, label: String) -> PResult<Item> {
        let t = self.advance();
        let u = Expr::State(Spanned::at(label, t.span));
        let mut factors: Vec<(OpExpr, SourceSpan)> = Vec::new();
        loop {
            if self.starts_op_factor() {
                factors.push(self.op_factor()?);
                continue;
            }
            if self.peek() == &Tok::LParen {
                let save = self.pos;
                let g = self.group()?;
                if Self::op_convertible(&g.expr) {
                    let span = g.span;
                    factors.push((self.to_op(g)?, span));
                    continue;
                }
                self.pos = save;
            }
            break;
        }
        if factors.is_empty() {
            return Ok(Item::new(Expr::covector(u), t.span));
        }
        let op = OpExpr::compose(factors.iter().map(|f| f.0.clone()).collect());
        if let Tok::Ket(v) = self.peek().clone() {
            let k = self.advance();
            let ket = Expr::State(Spanned::at(v, k.span));
            return Ok(Item::new(
                Expr::matrix_element(u, op, ket, MatrixOrigin::BraketChained),
                t.span.join(k.span),
            ));
        }
        let span = t.span.join(factors[factors.len() - 1].1);
        Ok(Item::new(
            Expr::covector(Expr::apply(op.left_action(), u)),
            span,
        ))
    }
}

/// Spans of the two labels inside a `<a|b>` token.
fn split_braket_span(whole: SourceSpan, a: &str) -> (SourceSpan, SourceSpan) {
    let mid = whole.start + 1 + a.len();
    let left = SourceSpan::new(whole.start, mid.min(whole.end), whole.line, whole.column);
    let right = SourceSpan::new(
        mid.min(whole.end),
        whole.end,
        whole.line,
        whole.column + 1 + a.chars().count(),
    );
    (left, right)
}

impl ParseError {
    fn with_expected(mut self, expected: &[&str]) -> Self {
        self.expected = expected.iter().map(|s| s.to_string()).collect();
        self
    }
}
