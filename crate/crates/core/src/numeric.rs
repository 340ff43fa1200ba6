//! Numeric evaluation on finite and truncated models, the Riesz
//! construction, and truncation sweeps for the unbounded-operator probes.
//!
//! Evaluation at a fixed truncation `N` never refuses: every composition is
//! defined on a finite-dimensional space. Whether a value survives `N → ∞`
//! is what the sweeps are for.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::ast::{format_complex, Expr, OpExpr, ScalarExpr};
use crate::checker::{check, CheckError, Diagnostic};
use crate::model::{
    adjoint_of, load_model, unit, BasisDef, HilbertModel, ModelError, OpDefinition, SpaceKind,
    StateCoeffs, StateDef, ORTHONORMAL_TOL,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("expression is rejected by the checker ({}); pass --force to evaluate anyway", first_error(.0))]
    Rejected(Vec<Diagnostic>),
    #[error("unbound scalar symbol `{0}`")]
    UnboundScalar(String),
    #[error("{0}")]
    Type(String),
    #[error("cannot evaluate {0}")]
    Unsupported(&'static str),
    #[error("expected a scalar-valued expression")]
    NotScalar,
    #[error("this operation needs a truncated model")]
    NotTruncated,
    #[error("this operation needs a finite model")]
    NotFinite,
    #[error("functional has {got} values but the basis has {want} members")]
    LengthMismatch { got: usize, want: usize },
    #[error("basis `{0}` is not orthonormal")]
    NotOrthonormal(String),
}

fn first_error(ds: &[Diagnostic]) -> String {
    ds.iter()
        .find(|d| d.is_error())
        .map_or_else(String::new, Diagnostic::to_line)
}

// ---- values -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(Complex64),
    Vector(DVector<Complex64>),
    /// A covector by its coefficients, the conjugates of the representing
    /// vector's coefficients.
    Covector(DVector<Complex64>),
    /// Matrix of an operator; anti-linear operators act as `M conj(v)`.
    Matrix {
        entries: DMatrix<Complex64>,
        antilinear: bool,
    },
}

impl Value {
    pub fn as_scalar(&self) -> Option<Complex64> {
        match self {
            Value::Scalar(z) => Some(*z),
            _ => None,
        }
    }

    /// The vector `u` with `F(w) = (u, w)`, for a covector value.
    pub fn representing_vector(&self) -> Option<DVector<Complex64>> {
        match self {
            Value::Covector(c) => Some(c.map(|z| z.conj())),
            _ => None,
        }
    }
}

fn fmt_vec(v: &DVector<Complex64>) -> String {
    let parts: Vec<String> = v.iter().map(|z| format_complex(*z)).collect();
    format!("[{}]", parts.join(", "))
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Scalar(z) => f.write_str(&format_complex(*z)),
            Value::Vector(v) => f.write_str(&fmt_vec(v)),
            Value::Covector(c) => write!(f, "covector {}", fmt_vec(c)),
            Value::Matrix {
                entries,
                antilinear,
            } => {
                if *antilinear {
                    f.write_str("anti-linear ")?;
                }
                let rows: Vec<String> = entries
                    .row_iter()
                    .map(|r| {
                        let cells: Vec<String> = r.iter().map(|z| format_complex(*z)).collect();
                        format!("[{}]", cells.join(", "))
                    })
                    .collect();
                write!(f, "[{}]", rows.join(", "))
            }
        }
    }
}

/// A value with the truncation level it was computed at.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub value: Value,
    pub n: Option<usize>,
    /// The checker rejected the expression; the value depends on `N` and
    /// has no limit in general.
    pub forced: bool,
}

impl fmt::Display for Evaluated {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)?;
        if let Some(n) = self.n {
            write!(f, " (N={n})")?;
        }
        if self.forced {
            f.write_str(" [forced: truncation-dependent]")?;
        }
        Ok(())
    }
}

/// Flat form for structured output. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueRecord {
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub forced: bool,
    pub shape: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub antilinear: Option<bool>,
}

impl Evaluated {
    pub fn to_record(&self) -> ValueRecord {
        let (kind, shape, data, antilinear): (_, _, Vec<Complex64>, _) = match &self.value {
            Value::Scalar(z) => ("scalar", vec![], vec![*z], None),
            Value::Vector(v) => ("vector", vec![v.len()], v.iter().copied().collect(), None),
            Value::Covector(c) => ("covector", vec![c.len()], c.iter().copied().collect(), None),
            Value::Matrix {
                entries,
                antilinear,
            } => (
                "matrix",
                vec![entries.nrows(), entries.ncols()],
                entries.transpose().iter().copied().collect(),
                Some(*antilinear),
            ),
        };
        ValueRecord {
            kind,
            n: self.n,
            forced: self.forced,
            shape,
            re: data.iter().map(|z| z.re).collect(),
            im: data.iter().map(|z| z.im).collect(),
            antilinear,
        }
    }
}

// ---- operators --------------------------------------------------------------

/// An operator kept in factored form, so that diagonal and rank-one
/// operators on large truncations never become dense matrices.
#[derive(Debug, Clone)]
enum Op {
    Identity,
    Dense {
        m: DMatrix<Complex64>,
        anti: bool,
    },
    Diag {
        d: DVector<Complex64>,
        anti: bool,
    },
    /// `w -> (bra, w) ket`
    Rank1 {
        ket: DVector<Complex64>,
        bra: DVector<Complex64>,
    },
    /// Written order; the last factor acts first.
    Compose(Vec<Op>),
    Scale(Complex64, Box<Op>),
    Sum(Vec<Op>),
}

fn maybe_conj(v: &DVector<Complex64>, anti: bool) -> DVector<Complex64> {
    if anti {
        v.map(|z| z.conj())
    } else {
        v.clone()
    }
}

impl Op {
    fn anti(&self) -> bool {
        match self {
            Op::Identity | Op::Rank1 { .. } => false,
            Op::Dense { anti, .. } | Op::Diag { anti, .. } => *anti,
            Op::Compose(xs) => xs.iter().filter(|x| x.anti()).count() % 2 == 1,
            Op::Scale(_, x) => x.anti(),
            Op::Sum(xs) => xs.first().is_some_and(Op::anti),
        }
    }

    fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        match self {
            Op::Identity => v.clone(),
            Op::Dense { m, anti } => m * maybe_conj(v, *anti),
            Op::Diag { d, anti } => d.component_mul(&maybe_conj(v, *anti)),
            Op::Rank1 { ket, bra } => ket * bra.dotc(v),
            Op::Compose(xs) => xs.iter().rev().fold(v.clone(), |acc, x| x.apply(&acc)),
            Op::Scale(c, x) => x.apply(v) * *c,
            Op::Sum(xs) => {
                let mut acc = DVector::zeros(v.len());
                for x in xs {
                    acc += x.apply(v);
                }
                acc
            }
        }
    }

    /// `O†` with `(O†u, v) = (u, Ov)`, or its conjugate for anti-linear `O`.
    fn adjoint(&self) -> Op {
        match self {
            Op::Identity => Op::Identity,
            Op::Dense { m, anti } => Op::Dense {
                m: adjoint_of(m, *anti),
                anti: *anti,
            },
            Op::Diag { d, anti } => Op::Diag {
                d: maybe_conj(d, !*anti),
                anti: *anti,
            },
            Op::Rank1 { ket, bra } => Op::Rank1 {
                ket: bra.clone(),
                bra: ket.clone(),
            },
            Op::Compose(xs) => Op::Compose(xs.iter().rev().map(Op::adjoint).collect()),
            Op::Scale(c, x) => {
                let c = if x.anti() { *c } else { c.conj() };
                Op::Scale(c, Box::new(x.adjoint()))
            }
            Op::Sum(xs) => Op::Sum(xs.iter().map(Op::adjoint).collect()),
        }
    }

    /// Columns are the images of the unit vectors; this is the matrix `M`
    /// for both linear and anti-linear operators since `conj(e_k) = e_k`.
    fn matrix(&self, dim: usize) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            m.set_column(k, &self.apply(&unit(dim, k)));
        }
        m
    }
}

// ---- evaluation -------------------------------------------------------------

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Evaluate even when the checker reports errors.
    pub force: bool,
    /// Values for free scalar symbols such as `c` in `c ^ /u/`.
    pub scalars: BTreeMap<String, Complex64>,
}

impl EvalOptions {
    pub fn forced() -> Self {
        EvalOptions {
            force: true,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone)]
enum Val {
    S(Complex64),
    V(DVector<Complex64>),
    /// A covector by its representing vector.
    C(DVector<Complex64>),
    O(Op),
}

impl Val {
    fn kind(&self) -> &'static str {
        match self {
            Val::S(_) => "scalar",
            Val::V(_) => "vector",
            Val::C(_) => "covector",
            Val::O(_) => "operator",
        }
    }
}

struct Evaluator<'a> {
    m: &'a HilbertModel,
    n: Option<usize>,
    dim: usize,
    scalars: &'a BTreeMap<String, Complex64>,
}

fn type_err(what: &str, got: &Val) -> NumericError {
    NumericError::Type(format!("{what}, found a {}", got.kind()))
}

impl Evaluator<'_> {
    fn state(&self, label: &str) -> Result<DVector<Complex64>, NumericError> {
        match self.m.state_vector(label, self.n) {
            Ok(v) => Ok(v),
            Err(ModelError::UnknownState(l)) => self
                .standard_member(label)
                .ok_or(NumericError::Model(ModelError::UnknownState(l))),
            Err(e) => Err(e.into()),
        }
    }

    /// `e3` for a standard basis `e`, when the model does not list it.
    fn standard_member(&self, label: &str) -> Option<DVector<Complex64>> {
        self.m.bases.iter().find_map(|(name, def)| {
            let k: usize = label.strip_prefix(name.as_str())?.parse().ok()?;
            (matches!(def, BasisDef::Standard) && (1..=self.dim).contains(&k))
                .then(|| unit(self.dim, k - 1))
        })
    }

    fn vector(&self, e: &Expr) -> Result<DVector<Complex64>, NumericError> {
        match self.eval(e)? {
            Val::V(v) => Ok(v),
            other => Err(type_err("expected a vector", &other)),
        }
    }

    fn op(&self, op: &OpExpr) -> Result<Op, NumericError> {
        Ok(match op {
            OpExpr::Symbol(s) => {
                let spec = self.m.operator(&s.node)?;
                match &spec.definition {
                    OpDefinition::Matrix(m) => Op::Dense {
                        m: m.clone(),
                        anti: spec.is_antilinear(),
                    },
                    OpDefinition::Diagonal { .. } => Op::Diag {
                        d: self
                            .m
                            .spectrum(&s.node, self.dim)?
                            .into_iter()
                            .map(|x| Complex64::new(x, 0.0))
                            .collect::<Vec<_>>()
                            .into(),
                        anti: spec.is_antilinear(),
                    },
                }
            }
            OpExpr::Dagger(x) => self.op(x)?.adjoint(),
            OpExpr::Compose(xs) => {
                Op::Compose(xs.iter().map(|x| self.op(x)).collect::<Result<_, _>>()?)
            }
            OpExpr::Identity(_) => Op::Identity,
            OpExpr::Outer { ket, bra } => Op::Rank1 {
                ket: self.vector(ket)?,
                bra: self.vector(bra)?,
            },
        })
    }

    fn scalar(&self, s: &ScalarExpr) -> Result<Complex64, NumericError> {
        match s {
            ScalarExpr::Literal(l) => Ok(l.node),
            ScalarExpr::Symbol(l) => self
                .scalars
                .get(&l.node)
                .copied()
                .ok_or_else(|| NumericError::UnboundScalar(l.node.clone())),
            ScalarExpr::Conj(x) => Ok(self.scalar(x)?.conj()),
            ScalarExpr::Times(xs) => xs
                .iter()
                .try_fold(Complex64::new(1.0, 0.0), |acc, x| Ok(acc * self.scalar(x)?)),
            ScalarExpr::Expr(e) => match self.eval(e)? {
                Val::S(z) => Ok(z),
                other => Err(type_err("expected a scalar", &other)),
            },
        }
    }

    fn eval(&self, e: &Expr) -> Result<Val, NumericError> {
        Ok(match e {
            Expr::State(l) => Val::V(self.state(&l.node)?),
            Expr::Covector(v) => Val::C(self.vector(v)?),
            Expr::OpApply(op, arg) => Val::V(self.op(op)?.apply(&self.vector(arg)?)),
            Expr::ScalarProduct(a, b) => Val::S(self.vector(a)?.dotc(&self.vector(b)?)),
            Expr::OuterProduct(k, b) => Val::O(Op::Rank1 {
                ket: self.vector(k)?,
                bra: self.vector(b)?,
            }),
            Expr::Scaled { scalar, term, .. } => {
                let c = self.scalar(scalar)?;
                match self.eval(term)? {
                    Val::S(z) => Val::S(c * z),
                    Val::V(v) => Val::V(v * c),
                    // c (u, .) = (conj(c) u, .)
                    Val::C(u) => Val::C(u * c.conj()),
                    Val::O(o) => Val::O(Op::Scale(c, Box::new(o))),
                }
            }
            Expr::Sum(ts) => {
                let vals = ts
                    .iter()
                    .map(|t| self.eval(t))
                    .collect::<Result<Vec<_>, _>>()?;
                sum(vals)?
            }
            Expr::MatrixElement { bra, op, ket, .. } => Val::S(
                self.vector(bra)?
                    .dotc(&self.op(op)?.apply(&self.vector(ket)?)),
            ),
            Expr::Operator(op) => Val::O(self.op(op)?),
            Expr::Scalar(s) => Val::S(self.scalar(s)?),
            Expr::Reduced(_) => return Err(NumericError::Unsupported("reduced matrix elements")),
        })
    }
}

fn sum(vals: Vec<Val>) -> Result<Val, NumericError> {
    let mut it = vals.into_iter();
    let first = it.next().ok_or(NumericError::Type("empty sum".into()))?;
    it.try_fold(first, |acc, x| {
        Ok(match (acc, x) {
            (Val::S(a), Val::S(b)) => Val::S(a + b),
            (Val::V(a), Val::V(b)) => Val::V(a + b),
            (Val::C(a), Val::C(b)) => Val::C(a + b),
            (Val::O(a), Val::O(b)) => {
                if a.anti() != b.anti() {
                    return Err(NumericError::Type(
                        "sum of a linear and an anti-linear operator".into(),
                    ));
                }
                match a {
                    Op::Sum(mut xs) => {
                        xs.push(b);
                        Val::O(Op::Sum(xs))
                    }
                    a => Val::O(Op::Sum(vec![a, b])),
                }
            }
            (a, b) => {
                return Err(NumericError::Type(format!(
                    "sum mixes a {} with a {}",
                    a.kind(),
                    b.kind()
                )))
            }
        })
    })
}

/// Evaluates `e` on `m` at truncation `n` (required for truncated models).
///
/// Expressions with checker errors are refused unless `opts.force` is set,
/// in which case the result is marked as forced.
pub fn evaluate(
    e: &Expr,
    m: &HilbertModel,
    n: Option<usize>,
    opts: &EvalOptions,
) -> Result<Evaluated, NumericError> {
    let diags = check(e, m)?;
    let rejected = diags.iter().any(Diagnostic::is_error);
    if rejected && !opts.force {
        return Err(NumericError::Rejected(diags));
    }
    let value = evaluate_unchecked(e, m, n, &opts.scalars)?;
    Ok(Evaluated {
        value,
        n: if m.is_finite() { None } else { n },
        forced: rejected,
    })
}

/// Evaluation without consulting the checker.
pub fn evaluate_unchecked(
    e: &Expr,
    m: &HilbertModel,
    n: Option<usize>,
    scalars: &BTreeMap<String, Complex64>,
) -> Result<Value, NumericError> {
    let dim = m.dim(n)?;
    let ev = Evaluator { m, n, dim, scalars };
    Ok(match ev.eval(e)? {
        Val::S(z) => Value::Scalar(z),
        Val::V(v) => Value::Vector(v),
        Val::C(u) => Value::Covector(u.map(|z| z.conj())),
        Val::O(o) => Value::Matrix {
            entries: o.matrix(dim),
            antilinear: o.anti(),
        },
    })
}

// ---- Riesz ------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct RieszSolution {
    /// Coefficients of the representing vector in the standard basis.
    pub coeffs: DVector<Complex64>,
    /// `max_n |F(e_n) - (u, e_n)|`
    pub residual: f64,
}

/// The vector `u = Σ conj(F(e_n)) e_n` representing the functional with
/// values `F(e_n)` on basis `basis` of a finite model.
pub fn riesz_solve(
    m: &HilbertModel,
    basis: &str,
    values: &DVector<Complex64>,
) -> Result<RieszSolution, NumericError> {
    if !m.is_finite() {
        return Err(NumericError::NotFinite);
    }
    let es = m.basis_vectors(basis, None)?;
    if es.len() != values.len() {
        return Err(NumericError::LengthMismatch {
            got: values.len(),
            want: es.len(),
        });
    }
    if !orthonormal(&es) {
        return Err(NumericError::NotOrthonormal(basis.to_string()));
    }
    let dim = m.dim(None)?;
    let mut u = DVector::zeros(dim);
    for (e, f) in es.iter().zip(values.iter()) {
        u += e * f.conj();
    }
    let residual = es
        .iter()
        .zip(values.iter())
        .map(|(e, f)| (f - u.dotc(e)).norm())
        .fold(0.0, f64::max);
    Ok(RieszSolution {
        coeffs: u,
        residual,
    })
}

fn orthonormal(es: &[DVector<Complex64>]) -> bool {
    es.iter().enumerate().all(|(i, a)| {
        es.iter().enumerate().all(|(j, b)| {
            let want = if i == j { 1.0 } else { 0.0 };
            (a.dotc(b) - want).norm() <= ORTHONORMAL_TOL
        })
    })
}

// ---- sweeps -----------------------------------------------------------------

/// Successive values must differ by less than this for convergence.
pub const CAUCHY_TOL: f64 = 1e-8;
/// Fitted log-log slope above which monotone growth counts as divergence.
pub const GROWTH_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Convergent => "convergent",
            Verdict::Divergent => "divergent",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub ns: Vec<usize>,
    pub values: Vec<f64>,
    pub verdict: Verdict,
    /// Least-squares slope of `ln value` against `ln N`.
    pub exponent: f64,
}

impl SweepReport {
    pub fn new(ns: Vec<usize>, values: Vec<f64>) -> Self {
        let exponent = loglog_slope(&ns, &values);
        let verdict = verdict(&values, exponent);
        SweepReport {
            ns,
            values,
            verdict,
            exponent,
        }
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// Two-column table followed by the verdict line.
    pub fn to_table(&self) -> String {
        let mut out = String::from("N\tvalue\n");
        for (n, v) in self.ns.iter().zip(&self.values) {
            out.push_str(&format!("{n}\t{v:.12}\n"));
        }
        out.push_str(&format!(
            "verdict: {} (exponent {:.4})\n",
            self.verdict, self.exponent
        ));
        out
    }

    /// Plot data with a header row.
    pub fn to_dsv(&self, sep: char) -> String {
        let mut out = format!("N{sep}value\n");
        for (n, v) in self.ns.iter().zip(&self.values) {
            out.push_str(&format!("{n}{sep}{v:e}\n"));
        }
        out
    }
}

fn loglog_slope(ns: &[usize], values: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(n, v)| ((*n as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn verdict(values: &[f64], exponent: f64) -> Verdict {
    let k = values.len();
    if k >= 3 && (1..=2).all(|i| (values[k - i] - values[k - i - 1]).abs() < CAUCHY_TOL) {
        return Verdict::Convergent;
    }
    let monotone = values.windows(2).all(|w| w[1] >= w[0]);
    if k >= 2 && monotone && values[k - 1] > values[0] && exponent > GROWTH_THRESHOLD {
        return Verdict::Divergent;
    }
    Verdict::Inconclusive
}

/// `max_{n ≤ N} |λ_n u_n|`, the supremum of `|(u, O v)|` over normalized
/// basis vectors `v = e_n`, for each `N`.
pub fn unboundedness_probe(
    m: &HilbertModel,
    u: &str,
    op: &str,
    ns: &[usize],
) -> Result<SweepReport, NumericError> {
    if m.is_finite() {
        return Err(NumericError::NotTruncated);
    }
    let values = ns
        .iter()
        .map(|&n| {
            let lambda = m.spectrum(op, n)?;
            let uv = m.state_vector(u, Some(n))?;
            Ok(lambda
                .iter()
                .zip(uv.iter())
                .map(|(l, c)| (c * *l).norm())
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<_>, NumericError>>()?;
    Ok(SweepReport::new(ns.to_vec(), values))
}

/// Norm of each truncation of a diagonal operator, `max_{n ≤ N} |λ_n|`.
pub fn operator_norm_sweep(
    m: &HilbertModel,
    op: &str,
    ns: &[usize],
) -> Result<SweepReport, NumericError> {
    if m.is_finite() {
        return Err(NumericError::NotTruncated);
    }
    let values = ns
        .iter()
        .map(|&n| {
            Ok(m.spectrum(op, n)?
                .iter()
                .map(|l| l.abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<_>, NumericError>>()?;
    Ok(SweepReport::new(ns.to_vec(), values))
}

/// `|e|` evaluated at each `N`. The checker runs once; rejected
/// expressions need `force`.
pub fn truncation_sweep(
    e: &Expr,
    m: &HilbertModel,
    ns: &[usize],
    opts: &EvalOptions,
) -> Result<SweepReport, NumericError> {
    if m.is_finite() {
        return Err(NumericError::NotTruncated);
    }
    let diags = check(e, m)?;
    if diags.iter().any(Diagnostic::is_error) && !opts.force {
        return Err(NumericError::Rejected(diags));
    }
    let values = ns
        .iter()
        .map(
            |&n| match evaluate_unchecked(e, m, Some(n), &opts.scalars)? {
                Value::Scalar(z) => Ok(z.norm()),
                _ => Err(NumericError::NotScalar),
            },
        )
        .collect::<Result<Vec<_>, NumericError>>()?;
    Ok(SweepReport::new(ns.to_vec(), values))
}

// ---- model builders and random data ---------------------------------------

/// A truncated model with one diagonal operator `P` (`λ_n = n^p`) and
/// power-law states `u_n = n^-q`.
pub fn power_law_model(p: f64, states: &[(&str, f64)]) -> Result<HilbertModel, ModelError> {
    let mut text = format!("[space]\nkind = truncated\n\n[operator P]\ndiagonal p = {p}\n");
    for (label, q) in states {
        text.push_str(&format!("\n[state {label}]\ndecay q = {q}\n"));
    }
    load_model(&text)
}

/// A finite model holding the given states explicitly.
pub fn finite_model(dim: usize, states: &[(&str, DVector<Complex64>)]) -> HilbertModel {
    HilbertModel {
        kind: SpaceKind::Finite { dim },
        states: states
            .iter()
            .map(|(l, v)| {
                (
                    l.to_string(),
                    StateDef {
                        label: l.to_string(),
                        coeffs: StateCoeffs::Explicit(v.clone()),
                        norm_finite: true,
                    },
                )
            })
            .collect(),
        operators: BTreeMap::new(),
        bases: BTreeMap::new(),
        functionals: BTreeMap::new(),
    }
}

/// Entries with real and imaginary parts uniform in [-1, 1).
pub fn random_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<Complex64> {
    DVector::from_fn(dim, |_, _| random_complex(rng))
}

pub fn random_matrix<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(dim, dim, |_, _| random_complex(rng))
}

pub fn random_complex<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Columns of the unitary factor of a random matrix.
pub fn random_orthonormal_basis<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
) -> Vec<DVector<Complex64>> {
    let q = random_matrix(rng, dim).qr().q();
    (0..dim).map(|k| q.column(k).into_owned()).collect()
}

// ---- demos ------------------------------------------------------------------

pub const UNBOUNDED_NS: [usize; 3] = [16, 256, 4096];
pub const HELLINGER_NS: [usize; 3] = [10, 100, 1000];

/// The slowly decaying state `u_n = n^-3/4` against `λ_n = n`.
pub fn demo_unbounded() -> Result<SweepReport, NumericError> {
    let m = power_law_model(1.0, &[("u", 0.75)])?;
    unboundedness_probe(&m, "u", "P", &UNBOUNDED_NS)
}

/// Truncated norms of `λ_n = n`.
pub fn demo_hellinger() -> Result<SweepReport, NumericError> {
    let m = power_law_model(1.0, &[])?;
    operator_norm_sweep(&m, "P", &HELLINGER_NS)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RieszDemo {
    pub trials: usize,
    pub max_dim: usize,
    pub max_residual: f64,
}

/// Random functionals on random orthonormal bases of dimension
/// `2..=max_dim`, cycling through the dimensions.
pub fn demo_riesz<R: Rng + ?Sized>(
    rng: &mut R,
    max_dim: usize,
    trials: usize,
) -> Result<RieszDemo, NumericError> {
    let mut worst: f64 = 0.0;
    let dims: Vec<usize> = (2..=max_dim.max(2)).collect();
    for t in 0..trials {
        let dim = dims[t % dims.len()];
        let basis = random_orthonormal_basis(rng, dim);
        let labels: Vec<String> = (1..=dim).map(|k| format!("b{k}")).collect();
        let named: Vec<(&str, DVector<Complex64>)> =
            labels.iter().map(String::as_str).zip(basis).collect();
        let mut m = finite_model(dim, &named);
        m.bases.insert("b".into(), BasisDef::List(labels.clone()));
        let values = random_vector(rng, dim);
        worst = worst.max(riesz_solve(&m, "b", &values)?.residual);
    }
    Ok(RieszDemo {
        trials,
        max_dim,
        max_residual: worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchwarzDemo {
    pub pairs: usize,
    pub max_dim: usize,
    pub violations: usize,
    /// Largest `|(u, v)| - |u| |v|`; never positive beyond rounding.
    pub worst_slack: f64,
}

pub const SCHWARZ_TOL: f64 = 1e-12;

/// Random pairs in dimensions `1..=max_dim` checked against
/// `|(u, v)| ≤ |u| |v|`, using the model inner product.
pub fn demo_schwarz<R: Rng + ?Sized>(
    rng: &mut R,
    max_dim: usize,
    pairs: usize,
) -> Result<SchwarzDemo, NumericError> {
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let dim = rng.gen_range(1..=max_dim.max(1));
        let (u, v) = (random_vector(rng, dim), random_vector(rng, dim));
        let (nu, nv) = (u.norm(), v.norm());
        let m = finite_model(dim, &[("u", u), ("v", v)]);
        let slack = m.inner_product("u", "v", None)?.norm() - nu * nv;
        worst = worst.max(slack);
        if slack > SCHWARZ_TOL {
            violations += 1;
        }
    }
    Ok(SchwarzDemo {
        pairs,
        max_dim,
        violations,
        worst_slack: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_slash;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ZERO: Complex64 = Complex64::new(0.0, 0.0);

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn eval_scalar(text: &str, m: &HilbertModel, n: Option<usize>) -> Complex64 {
        evaluate(&parse_slash(text).unwrap(), m, n, &EvalOptions::default())
            .unwrap()
            .value
            .as_scalar()
            .unwrap()
    }

    #[test]
    fn normalized_self_product() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let m = finite_model(2, &[("u", DVector::from_vec(vec![c(s, 0.0), c(0.0, s)]))]);
        let z = eval_scalar("/u/ . /u/", &m, None);
        assert!((z - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn partial_sum_matches_direct_sum() {
        let m = power_law_model(1.0, &[("u", 0.75), ("v", 3.0)]).unwrap();
        let z = eval_scalar("/u/ . P/v/", &m, Some(1000));
        let direct: f64 = (1..=1000).map(|k| (k as f64).powf(-2.75)).sum();
        assert!((z.re - direct).abs() < 1e-12 && z.im == 0.0);
        let err = evaluate(
            &parse_slash("/u/ . P/u/").unwrap(),
            &m,
            Some(10),
            &EvalOptions::default(),
        );
        assert!(matches!(err, Err(NumericError::Rejected(_))));
        let forced = evaluate(
            &parse_slash("/u/ . P/u/").unwrap(),
            &m,
            Some(10),
            &EvalOptions::forced(),
        )
        .unwrap();
        assert!(forced.forced);
        assert_eq!(forced.n, Some(10));
        let missing = evaluate(
            &parse_slash("/u/ . P/v/").unwrap(),
            &m,
            None,
            &EvalOptions::default(),
        );
        assert_eq!(
            missing,
            Err(NumericError::Model(ModelError::MissingTruncation))
        );
    }

    #[test]
    fn covector_coefficients_are_conjugates() {
        let m = finite_model(
            2,
            &[("u", DVector::from_vec(vec![c(1.0, 2.0), c(0.0, -1.0)]))],
        );
        let v = evaluate(
            &parse_slash("/u/ .").unwrap(),
            &m,
            None,
            &EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(
            v.value,
            Value::Covector(DVector::from_vec(vec![c(1.0, -2.0), c(0.0, 1.0)]))
        );
        assert_eq!(v.value.representing_vector().unwrap()[0], c(1.0, 2.0));
    }

    #[test]
    fn outer_product_and_collapse_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vs: Vec<_> = (0..3).map(|_| random_vector(&mut rng, 3)).collect();
        let m = finite_model(
            3,
            &[
                ("u", vs[0].clone()),
                ("v", vs[1].clone()),
                ("w", vs[2].clone()),
            ],
        );
        let none = BTreeMap::new();
        let a = evaluate_unchecked(&parse_slash("(/u/ ^ /v/ .) /w/").unwrap(), &m, None, &none)
            .unwrap();
        let b =
            evaluate_unchecked(&parse_slash("/u/ ^ /v/ . /w/").unwrap(), &m, None, &none).unwrap();
        let (Value::Vector(a), Value::Vector(b)) = (a, b) else {
            panic!()
        };
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn riesz_examples() {
        let mut m = finite_model(2, &[]);
        m.bases.insert("e".into(), BasisDef::Standard);
        let r = riesz_solve(&m, "e", &DVector::from_vec(vec![c(1.0, 0.0), ZERO])).unwrap();
        assert_eq!(r.coeffs, DVector::from_vec(vec![c(1.0, 0.0), ZERO]));
        assert_eq!(r.residual, 0.0);
        let mut m = finite_model(4, &[]);
        m.bases.insert("e".into(), BasisDef::Standard);
        let r = riesz_solve(&m, "e", &DVector::from_element(4, c(0.0, 1.0))).unwrap();
        assert_eq!(r.coeffs, DVector::from_element(4, c(0.0, -1.0)));
        assert!(r.residual <= 1e-15);
        assert!(matches!(
            riesz_solve(&m, "e", &DVector::from_element(3, ZERO)),
            Err(NumericError::LengthMismatch { got: 3, want: 4 })
        ));
    }

    #[test]
    fn non_orthonormal_basis_is_rejected() {
        let mut m = finite_model(
            2,
            &[
                ("a", DVector::from_vec(vec![c(1.0, 0.0), ZERO])),
                ("b", DVector::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)])),
            ],
        );
        m.bases
            .insert("x".into(), BasisDef::List(vec!["a".into(), "b".into()]));
        assert_eq!(
            riesz_solve(&m, "x", &DVector::from_element(2, ZERO)),
            Err(NumericError::NotOrthonormal("x".into()))
        );
    }

    #[test]
    fn probe_examples() {
        let r = demo_unbounded().unwrap();
        for (v, want) in r.values.iter().zip([2.0, 4.0, 8.0]) {
            assert!((v - want).abs() / want <= 1e-12);
        }
        assert_eq!(r.verdict, Verdict::Divergent);
        assert!((r.exponent - 0.25).abs() < 1e-9);
        let m = power_law_model(1.0, &[("v", 3.0)]).unwrap();
        let r = unboundedness_probe(&m, "v", "P", &UNBOUNDED_NS).unwrap();
        assert_eq!(r.values, vec![1.0; 3]);
        assert_eq!(r.verdict, Verdict::Convergent);
        let m = power_law_model(0.0, &[("u", 0.75)]).unwrap();
        assert_eq!(
            unboundedness_probe(&m, "u", "P", &UNBOUNDED_NS)
                .unwrap()
                .verdict,
            Verdict::Convergent
        );
    }

    #[test]
    fn norm_sweep_examples() {
        let r = demo_hellinger().unwrap();
        assert_eq!(r.values, vec![10.0, 100.0, 1000.0]);
        assert_eq!(r.verdict, Verdict::Divergent);
        assert!((r.exponent - 1.0).abs() < 1e-12);
        let m = power_law_model(2.0, &[]).unwrap();
        assert_eq!(
            operator_norm_sweep(&m, "P", &[10, 100]).unwrap().values,
            vec![100.0, 10000.0]
        );
        let m = power_law_model(0.0, &[]).unwrap();
        let r = operator_norm_sweep(&m, "P", &HELLINGER_NS).unwrap();
        assert_eq!((r.values, r.verdict), (vec![1.0; 3], Verdict::Convergent));
    }

    #[test]
    fn truncation_sweep_examples() {
        let m = power_law_model(1.0, &[("u", 0.75), ("v", 3.0)]).unwrap();
        let e = parse_slash("/v/ . P/v/").unwrap();
        let r = truncation_sweep(&e, &m, &[100, 1000, 10000], &EvalOptions::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Convergent);
        let zeta5: f64 = (1..=200_000).map(|k| (k as f64).powi(-5)).sum();
        assert!((r.last().unwrap() - zeta5).abs() < 1e-8);
        let e = parse_slash("/u/ . P/u/").unwrap();
        let r = truncation_sweep(&e, &m, &[1000, 10000, 100000], &EvalOptions::forced()).unwrap();
        assert_eq!(r.verdict, Verdict::Divergent);
        assert!((r.exponent - 0.5).abs() < 0.05);
    }

    #[test]
    fn report_output() {
        let r = SweepReport::new(vec![10, 100], vec![1.0, 2.0]);
        assert_eq!(r.verdict, Verdict::Divergent);
        assert!(r.to_table().starts_with("N\tvalue\n10\t1.000000000000\n"));
        assert!(r
            .to_table()
            .ends_with("verdict: divergent (exponent 0.3010)\n"));
        assert_eq!(r.to_dsv(','), "N,value\n10,1e0\n100,2e0\n");
        let flat = SweepReport::new(vec![10, 100, 1000], vec![1.0, 1.5, 1.4]);
        assert_eq!(flat.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn demos_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let r = demo_riesz(&mut rng, 8, 100).unwrap();
        assert!(r.max_residual <= 1e-12, "{}", r.max_residual);
        let s = demo_schwarz(&mut rng, 16, 1000).unwrap();
        assert_eq!(s.violations, 0);
    }
}
