//! Concrete Hilbert-space models.
//!
//! A model is either finite-dimensional with explicit coefficient vectors and
//! matrices, or a truncated family where states decay as `n^-q` and
//! operators are diagonal with `lambda_n = n^p`. Domain membership for the
//! truncated family is decided analytically: `u` is in `D(O)` iff
//! `sum n^(2p - 2q)` converges, i.e. iff `2(q - p) > 1`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::ast::RenderContext;

pub const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("model invariant `{rule}` violated: {message}")]
    Invariant { rule: &'static str, message: String },
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("unknown basis `{0}`")]
    UnknownBasis(String),
    #[error("a truncated model needs a truncation level N")]
    MissingTruncation,
    #[error("operator `{0}` is not diagonal")]
    NotDiagonal(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    In,
    Out,
    Unknown,
}

impl fmt::Display for Membership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Membership::In => "in",
            Membership::Out => "out",
            Membership::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Declared,
    DerivedPowerLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainFact {
    pub state_label: String,
    pub operator_symbol: String,
    pub daggered: bool,
    pub membership: Membership,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Finite { dim: usize },
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    None,
    /// `(-1)^(n-1)`
    Alternating,
}

impl Phase {
    fn at(self, n: usize) -> f64 {
        match self {
            Phase::None => 1.0,
            Phase::Alternating => {
                if n % 2 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StateCoeffs {
    Explicit(DVector<Complex64>),
    /// `u_n = n^-q * phase(n)` for n >= 1.
    PowerLaw {
        q: f64,
        phase: Phase,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateDef {
    pub label: String,
    pub coeffs: StateCoeffs,
    pub norm_finite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linearity {
    Linear,
    AntiLinear,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpDefinition {
    /// Acts as `M v`, or `M conj(v)` when anti-linear.
    Matrix(DMatrix<Complex64>),
    /// `lambda_n = n^p`.
    Diagonal { p: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpec {
    pub symbol: String,
    pub linearity: Linearity,
    pub definition: OpDefinition,
    pub declared_adjoint: Option<String>,
    pub domain_facts: Vec<DomainFact>,
}

impl OperatorSpec {
    pub fn is_antilinear(&self) -> bool {
        self.linearity == Linearity::AntiLinear
    }

    fn fact(&self, state: &str, daggered: bool) -> Option<&DomainFact> {
        self.domain_facts
            .iter()
            .find(|f| f.state_label == state && f.daggered == daggered)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisDef {
    /// Named states, in order.
    List(Vec<String>),
    /// The coordinate basis `e_1, e_2, ...`; finite models also get states
    /// named `<basis><k>`.
    Standard,
}

/// A linear functional given by its values on the coordinate basis.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalDef {
    Values(DVector<Complex64>),
    /// `F(e_n) = n^-q`; bounded iff `2q > 1`.
    Decay {
        q: f64,
    },
}

impl FunctionalDef {
    pub fn is_bounded(&self) -> bool {
        match self {
            FunctionalDef::Values(_) => true,
            FunctionalDef::Decay { q } => 2.0 * q > 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HilbertModel {
    pub kind: SpaceKind,
    pub states: BTreeMap<String, StateDef>,
    pub operators: BTreeMap<String, OperatorSpec>,
    pub bases: BTreeMap<String, BasisDef>,
    pub functionals: BTreeMap<String, FunctionalDef>,
}

/// `2(q - p) > 1`, the convergence condition of `sum n^(2p - 2q)`.
pub fn power_law_membership(p: f64, q: f64) -> Membership {
    if 2.0 * (q - p) > 1.0 {
        Membership::In
    } else {
        Membership::Out
    }
}

impl HilbertModel {
    pub fn is_finite(&self) -> bool {
        matches!(self.kind, SpaceKind::Finite { .. })
    }

    /// Working dimension: `dim` for finite models, `N` for truncated ones.
    pub fn dim(&self, n: Option<usize>) -> Result<usize, ModelError> {
        match self.kind {
            SpaceKind::Finite { dim } => Ok(dim),
            SpaceKind::Truncated => n.ok_or(ModelError::MissingTruncation),
        }
    }

    pub fn state(&self, label: &str) -> Result<&StateDef, ModelError> {
        self.states
            .get(label)
            .ok_or_else(|| ModelError::UnknownState(label.to_string()))
    }

    pub fn operator(&self, symbol: &str) -> Result<&OperatorSpec, ModelError> {
        self.operators
            .get(symbol)
            .ok_or_else(|| ModelError::UnknownOperator(symbol.to_string()))
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.states.contains_key(label) || self.functionals.contains_key(label)
    }

    pub fn render_context(&self) -> RenderContext {
        RenderContext {
            antilinear: self
                .operators
                .values()
                .filter(|o| o.is_antilinear())
                .map(|o| o.symbol.clone())
                .collect(),
            adjoint_names: BTreeMap::new(),
        }
    }

    /// Like [`render_context`](Self::render_context) but also displays
    /// declared adjoint names in place of `dag(O)`.
    pub fn display_context(&self) -> RenderContext {
        let mut ctx = self.render_context();
        ctx.adjoint_names = self
            .operators
            .values()
            .filter_map(|o| o.declared_adjoint.clone().map(|a| (o.symbol.clone(), a)))
            .collect();
        ctx
    }

    pub fn domain_membership(
        &self,
        state: &str,
        op: &str,
        daggered: bool,
    ) -> Result<Membership, ModelError> {
        if !self.has_label(state) {
            return Err(ModelError::UnknownState(state.to_string()));
        }
        let spec = self.operator(op)?;
        if self.is_finite() {
            return Ok(Membership::In);
        }
        // Real diagonal rules are self-adjoint, so D(O) = D(O†).
        let daggered = daggered && !matches!(spec.definition, OpDefinition::Diagonal { .. });
        Ok(spec
            .fact(state, daggered)
            .map_or(Membership::Unknown, |f| f.membership))
    }

    /// Decay exponent of a state or functional representative, if it is a
    /// power law.
    pub fn decay(&self, label: &str) -> Option<f64> {
        if let Some(s) = self.states.get(label) {
            return match s.coeffs {
                StateCoeffs::PowerLaw { q, .. } => Some(q),
                StateCoeffs::Explicit(_) => None,
            };
        }
        match self.functionals.get(label)? {
            FunctionalDef::Decay { q } => Some(*q),
            FunctionalDef::Values(_) => None,
        }
    }

    /// Coefficient vector of a state, or of the representing vector of a
    /// bounded functional.
    pub fn state_vector(
        &self,
        label: &str,
        n: Option<usize>,
    ) -> Result<DVector<Complex64>, ModelError> {
        let dim = self.dim(n)?;
        if let Some(s) = self.states.get(label) {
            return Ok(match &s.coeffs {
                StateCoeffs::Explicit(v) => v.clone(),
                StateCoeffs::PowerLaw { q, phase } => DVector::from_fn(dim, |i, _| {
                    let k = i + 1;
                    Complex64::new((k as f64).powf(-q) * phase.at(k), 0.0)
                }),
            });
        }
        match self.functionals.get(label) {
            Some(FunctionalDef::Values(v)) => Ok(v.map(|z| z.conj())),
            Some(FunctionalDef::Decay { q }) => Ok(DVector::from_fn(dim, |i, _| {
                Complex64::new(((i + 1) as f64).powf(-q), 0.0)
            })),
            None => Err(ModelError::UnknownState(label.to_string())),
        }
    }

    /// Matrix of the linear part of an operator and whether it is
    /// anti-linear.
    pub fn operator_matrix(
        &self,
        symbol: &str,
        n: Option<usize>,
    ) -> Result<(DMatrix<Complex64>, bool), ModelError> {
        let spec = self.operator(symbol)?;
        let dim = self.dim(n)?;
        let m = match &spec.definition {
            OpDefinition::Matrix(m) => m.clone(),
            OpDefinition::Diagonal { p } => {
                DMatrix::from_diagonal(&DVector::from_fn(dim, |i, _| {
                    Complex64::new(((i + 1) as f64).powf(*p), 0.0)
                }))
            }
        };
        Ok((m, spec.is_antilinear()))
    }

    /// Diagonal entries `lambda_1..lambda_N` of a diagonal operator.
    pub fn spectrum(&self, symbol: &str, n: usize) -> Result<Vec<f64>, ModelError> {
        match &self.operator(symbol)?.definition {
            OpDefinition::Diagonal { p } => Ok((1..=n).map(|k| (k as f64).powf(*p)).collect()),
            OpDefinition::Matrix(_) => Err(ModelError::NotDiagonal(symbol.to_string())),
        }
    }

    /// `sum_n conj(u_n) v_n` over the working dimension.
    pub fn inner_product(
        &self,
        u: &str,
        v: &str,
        n: Option<usize>,
    ) -> Result<Complex64, ModelError> {
        let a = self.state_vector(u, n)?;
        let b = self.state_vector(v, n)?;
        Ok(a.dotc(&b))
    }

    pub fn apply_operator(
        &self,
        op: &str,
        state: &str,
        n: Option<usize>,
    ) -> Result<DVector<Complex64>, ModelError> {
        let (m, anti) = self.operator_matrix(op, n)?;
        let v = self.state_vector(state, n)?;
        Ok(apply_matrix(&m, anti, &v))
    }

    /// Matrix of `O†`. For anti-linear `O` (acting as `M conj(v)`), `O†` is
    /// anti-linear too with matrix `M^T`, which gives
    /// `(O†u, v) = conj((u, Ov))`.
    pub fn adjoint_matrix(
        &self,
        op: &str,
        n: Option<usize>,
    ) -> Result<DMatrix<Complex64>, ModelError> {
        let (m, anti) = self.operator_matrix(op, n)?;
        Ok(adjoint_of(&m, anti))
    }

    /// Labels of a basis, expanding standard bases to `N` members.
    pub fn basis_labels(&self, name: &str, n: Option<usize>) -> Result<Vec<String>, ModelError> {
        match self.bases.get(name) {
            Some(BasisDef::List(ls)) => Ok(ls.clone()),
            Some(BasisDef::Standard) => {
                let dim = self.dim(n)?;
                Ok((1..=dim).map(|k| format!("{name}{k}")).collect())
            }
            None => Err(ModelError::UnknownBasis(name.to_string())),
        }
    }

    /// Coefficient vectors of a basis.
    pub fn basis_vectors(
        &self,
        name: &str,
        n: Option<usize>,
    ) -> Result<Vec<DVector<Complex64>>, ModelError> {
        match self.bases.get(name) {
            Some(BasisDef::List(ls)) => ls.iter().map(|l| self.state_vector(l, n)).collect(),
            Some(BasisDef::Standard) => {
                let dim = self.dim(n)?;
                Ok((0..dim).map(|k| unit(dim, k)).collect())
            }
            None => Err(ModelError::UnknownBasis(name.to_string())),
        }
    }
}

pub fn unit(dim: usize, k: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(dim);
    v[k] = Complex64::new(1.0, 0.0);
    v
}

/// `M v`, or `M conj(v)` for an anti-linear operator.
pub fn apply_matrix(
    m: &DMatrix<Complex64>,
    antilinear: bool,
    v: &DVector<Complex64>,
) -> DVector<Complex64> {
    if antilinear {
        m * v.map(|z| z.conj())
    } else {
        m * v
    }
}

pub fn adjoint_of(m: &DMatrix<Complex64>, antilinear: bool) -> DMatrix<Complex64> {
    if antilinear {
        m.transpose()
    } else {
        m.adjoint()
    }
}

// ---- model files ----------------------------------------------------------

struct Line<'a> {
    no: usize,
    text: &'a str,
    /// Column of `text` within the raw line.
    col: usize,
}

fn perr(line: usize, column: usize, message: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        column,
        message: message.into(),
    }
}

#[derive(Default)]
struct RawState {
    coeffs: Option<Vec<Complex64>>,
    decay: Option<f64>,
    phase: Option<Phase>,
    normalize: bool,
    line: usize,
}

#[derive(Default)]
struct RawOp {
    matrix: Option<Vec<Vec<Complex64>>>,
    diagonal: Option<f64>,
    antilinear: bool,
    adjoint: Option<String>,
    line: usize,
}

#[derive(Default)]
struct RawBasis {
    states: Option<Vec<String>>,
    standard: bool,
    line: usize,
}

#[derive(Default)]
struct RawFunctional {
    values: Option<Vec<Complex64>>,
    decay: Option<f64>,
    line: usize,
}

enum Section {
    None,
    Space,
    State(String),
    Operator(String),
    Basis(String),
    Domain,
    Functional(String),
}

struct Override {
    state: String,
    op: String,
    daggered: bool,
    membership: Membership,
    line: usize,
}

/// Parses and validates a model file.
pub fn load_model(text: &str) -> Result<HilbertModel, ModelError> {
    let mut kind: Option<String> = None;
    let mut dim: Option<usize> = None;
    let mut states: Vec<(String, RawState)> = Vec::new();
    let mut ops: Vec<(String, RawOp)> = Vec::new();
    let mut bases: Vec<(String, RawBasis)> = Vec::new();
    let mut functionals: Vec<(String, RawFunctional)> = Vec::new();
    let mut overrides: Vec<Override> = Vec::new();
    let mut section = Section::None;

    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        let trimmed = body.trim();
        if trimmed.is_empty() {
            continue;
        }
        let col = body.len() - body.trim_start().len() + 1;
        let line = Line {
            no,
            text: trimmed,
            col,
        };
        if let Some(inner) = trimmed.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| perr(no, col, "section header missing ']'"))?
                .trim();
            let (head, name) = match inner.split_once(char::is_whitespace) {
                Some((h, n)) => (h, n.trim().to_string()),
                None => (inner, String::new()),
            };
            let need_name = |n: &str| {
                if n.is_empty() {
                    Err(perr(no, col, format!("section [{head}] needs a name")))
                } else {
                    Ok(())
                }
            };
            section = match head {
                "space" => Section::Space,
                "domain" => Section::Domain,
                "state" => {
                    need_name(&name)?;
                    if states.iter().any(|(n, _)| *n == name) {
                        return Err(perr(no, col, format!("state `{name}` defined twice")));
                    }
                    states.push((
                        name.clone(),
                        RawState {
                            line: no,
                            ..Default::default()
                        },
                    ));
                    Section::State(name)
                }
                "operator" => {
                    need_name(&name)?;
                    if ops.iter().any(|(n, _)| *n == name) {
                        return Err(perr(no, col, format!("operator `{name}` defined twice")));
                    }
                    ops.push((
                        name.clone(),
                        RawOp {
                            line: no,
                            ..Default::default()
                        },
                    ));
                    Section::Operator(name)
                }
                "basis" => {
                    need_name(&name)?;
                    bases.push((
                        name.clone(),
                        RawBasis {
                            line: no,
                            ..Default::default()
                        },
                    ));
                    Section::Basis(name)
                }
                "functional" => {
                    need_name(&name)?;
                    functionals.push((
                        name.clone(),
                        RawFunctional {
                            line: no,
                            ..Default::default()
                        },
                    ));
                    Section::Functional(name)
                }
                other => return Err(perr(no, col, format!("unknown section [{other}]"))),
            };
            continue;
        }
        if let Section::Domain = section {
            overrides.push(parse_override(&line)?);
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| perr(no, col, "expected `key = value`"))?;
        let key = key.split_whitespace().collect::<Vec<_>>().join(" ");
        let value = value.trim();
        let vcol = col + trimmed.find('=').unwrap_or(0) + 1;
        match &section {
            Section::None => return Err(perr(no, col, "key outside of any section")),
            Section::Space => match key.as_str() {
                "kind" => kind = Some(value.to_string()),
                "dim" => dim = Some(parse_usize(value, no, vcol)?),
                _ => return Err(perr(no, col, format!("unknown [space] key `{key}`"))),
            },
            Section::State(name) => {
                let s = &mut states.iter_mut().find(|(n, _)| n == name).unwrap().1;
                match key.as_str() {
                    "coeffs" => s.coeffs = Some(parse_complex_list(value, no, vcol)?),
                    "decay q" => s.decay = Some(parse_f64(value, no, vcol)?),
                    "phase" => {
                        s.phase = Some(match value {
                            "none" => Phase::None,
                            "alternating" => Phase::Alternating,
                            _ => {
                                return Err(perr(no, vcol, "phase must be `none` or `alternating`"))
                            }
                        })
                    }
                    "normalize" => s.normalize = parse_bool(value, no, vcol)?,
                    _ => return Err(perr(no, col, format!("unknown state key `{key}`"))),
                }
            }
            Section::Operator(name) => {
                let o = &mut ops.iter_mut().find(|(n, _)| n == name).unwrap().1;
                match key.as_str() {
                    "matrix" => {
                        let rows = value
                            .split(';')
                            .map(|r| parse_complex_list(r, no, vcol))
                            .collect::<Result<Vec<_>, _>>()?;
                        o.matrix = Some(rows);
                    }
                    "diagonal p" => o.diagonal = Some(parse_f64(value, no, vcol)?),
                    "antilinear" => o.antilinear = parse_bool(value, no, vcol)?,
                    "adjoint" => o.adjoint = Some(value.to_string()),
                    _ => return Err(perr(no, col, format!("unknown operator key `{key}`"))),
                }
            }
            Section::Basis(name) => {
                let b = &mut bases.iter_mut().find(|(n, _)| n == name).unwrap().1;
                match key.as_str() {
                    "states" => {
                        b.states = Some(value.split(',').map(|s| s.trim().to_string()).collect())
                    }
                    "rule" if value == "standard" => b.standard = true,
                    "rule" => return Err(perr(no, vcol, "only `rule = standard` is supported")),
                    _ => return Err(perr(no, col, format!("unknown basis key `{key}`"))),
                }
            }
            Section::Functional(name) => {
                let f = &mut functionals.iter_mut().find(|(n, _)| n == name).unwrap().1;
                match key.as_str() {
                    "values" => f.values = Some(parse_complex_list(value, no, vcol)?),
                    "decay q" => f.decay = Some(parse_f64(value, no, vcol)?),
                    _ => return Err(perr(no, col, format!("unknown functional key `{key}`"))),
                }
            }
            Section::Domain => unreachable!(),
        }
    }

    let kind = match kind.as_deref() {
        Some("finite") => SpaceKind::Finite {
            dim: dim.ok_or_else(|| perr(1, 1, "finite space needs `dim`"))?,
        },
        Some("truncated") => SpaceKind::Truncated,
        Some(other) => return Err(perr(1, 1, format!("unknown space kind `{other}`"))),
        None => return Err(perr(1, 1, "missing [space] section with `kind`")),
    };
    if let SpaceKind::Finite { dim: 0 } = kind {
        return Err(perr(1, 1, "dimension must be positive"));
    }

    let mut model = HilbertModel {
        kind,
        states: BTreeMap::new(),
        operators: BTreeMap::new(),
        bases: BTreeMap::new(),
        functionals: BTreeMap::new(),
    };

    for (label, s) in states {
        let def = build_state(&model, &label, s)?;
        model.states.insert(label, def);
    }
    for (name, f) in functionals {
        let def = match (f.values, f.decay, model.kind) {
            (Some(vals), None, SpaceKind::Finite { dim }) => {
                if vals.len() != dim {
                    return Err(invariant(
                        "functional-length",
                        format!(
                            "functional `{name}` has {} values, dimension is {dim}",
                            vals.len()
                        ),
                    ));
                }
                FunctionalDef::Values(DVector::from_vec(vals))
            }
            (None, Some(q), SpaceKind::Truncated) => FunctionalDef::Decay { q },
            _ => {
                return Err(perr(
                    f.line,
                    1,
                    format!("functional `{name}` needs `values` (finite) or `decay q` (truncated)"),
                ))
            }
        };
        if model.states.contains_key(&name) {
            return Err(perr(
                f.line,
                1,
                format!("`{name}` is both a state and a functional"),
            ));
        }
        model.functionals.insert(name, def);
    }
    for (symbol, o) in ops {
        let spec = build_operator(&model, &symbol, o)?;
        model.operators.insert(symbol, spec);
    }
    for (name, b) in bases {
        let def = match (b.states, b.standard) {
            (Some(ls), false) => {
                for l in &ls {
                    if !model.states.contains_key(l) {
                        return Err(perr(
                            b.line,
                            1,
                            format!("basis `{name}` names unknown state `{l}`"),
                        ));
                    }
                }
                BasisDef::List(ls)
            }
            (None, true) => {
                if let SpaceKind::Finite { dim } = model.kind {
                    for k in 0..dim {
                        let label = format!("{name}{}", k + 1);
                        model.states.entry(label.clone()).or_insert(StateDef {
                            label,
                            coeffs: StateCoeffs::Explicit(unit(dim, k)),
                            norm_finite: true,
                        });
                    }
                }
                BasisDef::Standard
            }
            _ => {
                return Err(perr(
                    b.line,
                    1,
                    format!("basis `{name}` needs exactly one of `states` or `rule = standard`"),
                ))
            }
        };
        model.bases.insert(name, def);
    }
    check_orthonormal(&model)?;
    derive_facts(&mut model, overrides)?;
    Ok(model)
}

fn invariant(rule: &'static str, message: String) -> ModelError {
    ModelError::Invariant { rule, message }
}

fn build_state(model: &HilbertModel, label: &str, s: RawState) -> Result<StateDef, ModelError> {
    let coeffs = match (model.kind, s.coeffs, s.decay) {
        (SpaceKind::Finite { dim }, Some(c), None) => {
            if c.len() != dim {
                return Err(invariant(
                    "coeff-length",
                    format!(
                        "state `{label}` has {} coefficients, dimension is {dim}",
                        c.len()
                    ),
                ));
            }
            let mut v = DVector::from_vec(c);
            if s.normalize {
                let norm = v.norm();
                if norm == 0.0 {
                    return Err(invariant("norm-finite", format!("state `{label}` is zero")));
                }
                v.unscale_mut(norm);
            }
            StateCoeffs::Explicit(v)
        }
        (SpaceKind::Truncated, None, Some(q)) => StateCoeffs::PowerLaw {
            q,
            phase: s.phase.unwrap_or(Phase::None),
        },
        (SpaceKind::Finite { .. }, _, _) => {
            return Err(perr(
                s.line,
                1,
                format!("finite state `{label}` needs `coeffs` only"),
            ))
        }
        (SpaceKind::Truncated, _, _) => {
            return Err(perr(
                s.line,
                1,
                format!("truncated state `{label}` needs `decay q` only"),
            ))
        }
    };
    let norm_finite = match coeffs {
        StateCoeffs::Explicit(_) => true,
        StateCoeffs::PowerLaw { q, .. } => 2.0 * q > 1.0,
    };
    if !norm_finite {
        return Err(invariant(
            "norm-finite",
            format!("state `{label}` decays too slowly to have a finite norm (needs 2q > 1)"),
        ));
    }
    Ok(StateDef {
        label: label.to_string(),
        coeffs,
        norm_finite,
    })
}

fn build_operator(
    model: &HilbertModel,
    symbol: &str,
    o: RawOp,
) -> Result<OperatorSpec, ModelError> {
    let definition = match (model.kind, o.matrix, o.diagonal) {
        (SpaceKind::Finite { dim }, Some(rows), None) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return Err(invariant(
                    "matrix-shape",
                    format!("operator `{symbol}` must be {dim}x{dim}"),
                ));
            }
            OpDefinition::Matrix(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
        }
        (SpaceKind::Finite { dim }, None, Some(p)) => {
            OpDefinition::Matrix(DMatrix::from_diagonal(&DVector::from_fn(dim, |i, _| {
                Complex64::new(((i + 1) as f64).powf(p), 0.0)
            })))
        }
        (SpaceKind::Truncated, None, Some(p)) => OpDefinition::Diagonal { p },
        (SpaceKind::Truncated, Some(_), _) => {
            return Err(perr(
                o.line,
                1,
                format!("operator `{symbol}`: truncated models only support `diagonal p`"),
            ))
        }
        _ => {
            return Err(perr(
                o.line,
                1,
                format!("operator `{symbol}` needs exactly one of `matrix` or `diagonal p`"),
            ))
        }
    };
    Ok(OperatorSpec {
        symbol: symbol.to_string(),
        linearity: if o.antilinear {
            Linearity::AntiLinear
        } else {
            Linearity::Linear
        },
        definition,
        declared_adjoint: o.adjoint,
        domain_facts: Vec::new(),
    })
}

fn check_orthonormal(model: &HilbertModel) -> Result<(), ModelError> {
    if !model.is_finite() {
        return Ok(());
    }
    for (name, def) in &model.bases {
        let BasisDef::List(labels) = def else {
            continue;
        };
        for (i, a) in labels.iter().enumerate() {
            for (j, b) in labels.iter().enumerate().skip(i) {
                let ip = model.inner_product(a, b, None)?;
                let want = if i == j { 1.0 } else { 0.0 };
                if (ip - Complex64::new(want, 0.0)).norm() > ORTHONORMAL_TOL {
                    return Err(invariant(
                        "orthonormal-basis",
                        format!("basis `{name}`: (/{a}/, /{b}/) = {ip}, expected {want}"),
                    ));
                }
            }
        }
    }
    Ok(())
}

fn derive_facts(model: &mut HilbertModel, overrides: Vec<Override>) -> Result<(), ModelError> {
    let labels: Vec<(String, Option<f64>)> = model
        .states
        .keys()
        .chain(model.functionals.keys())
        .map(|l| (l.clone(), model.decay(l)))
        .collect();
    let finite = model.is_finite();
    for spec in model.operators.values_mut() {
        let p = match spec.definition {
            OpDefinition::Diagonal { p } => Some(p),
            OpDefinition::Matrix(_) => None,
        };
        for (label, q) in &labels {
            for daggered in [false, true] {
                let membership = if finite {
                    Membership::In
                } else {
                    match (p, q) {
                        (Some(p), Some(q)) => power_law_membership(p, *q),
                        _ => Membership::Unknown,
                    }
                };
                spec.domain_facts.push(DomainFact {
                    state_label: label.clone(),
                    operator_symbol: spec.symbol.clone(),
                    daggered,
                    membership,
                    provenance: if finite {
                        Provenance::Declared
                    } else {
                        Provenance::DerivedPowerLaw
                    },
                });
            }
        }
    }
    for o in overrides {
        if !model.has_label(&o.state) {
            return Err(perr(
                o.line,
                1,
                format!("[domain] names unknown state `{}`", o.state),
            ));
        }
        let spec = model.operators.get_mut(&o.op).ok_or_else(|| {
            perr(
                o.line,
                1,
                format!("[domain] names unknown operator `{}`", o.op),
            )
        })?;
        if finite && o.membership != Membership::In {
            return Err(invariant(
                "finite-everywhere-defined",
                format!(
                    "operators of a finite model are defined everywhere (line {})",
                    o.line
                ),
            ));
        }
        let diagonal = matches!(spec.definition, OpDefinition::Diagonal { .. });
        for f in spec.domain_facts.iter_mut() {
            if f.state_label == o.state && (diagonal || f.daggered == o.daggered) {
                f.membership = o.membership;
                f.provenance = Provenance::Declared;
            }
        }
    }
    Ok(())
}

fn parse_override(line: &Line) -> Result<Override, ModelError> {
    let mut parts = line.text.split_whitespace();
    let (Some(m), Some(state), Some(op), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(perr(
            line.no,
            line.col,
            "expected `in|out|unknown <state> <operator>`",
        ));
    };
    let membership = match m {
        "in" => Membership::In,
        "out" => Membership::Out,
        "unknown" => Membership::Unknown,
        _ => return Err(perr(line.no, line.col, format!("unknown membership `{m}`"))),
    };
    let (op, daggered) = match op.strip_prefix("dag(").and_then(|s| s.strip_suffix(')')) {
        Some(inner) => (inner.trim().to_string(), true),
        None => (op.to_string(), false),
    };
    Ok(Override {
        state: state.to_string(),
        op,
        daggered,
        membership,
        line: line.no,
    })
}

fn parse_usize(s: &str, line: usize, col: usize) -> Result<usize, ModelError> {
    s.parse().map_err(|_| {
        perr(
            line,
            col,
            format!("expected a positive integer, found `{s}`"),
        )
    })
}

fn parse_f64(s: &str, line: usize, col: usize) -> Result<f64, ModelError> {
    let v: f64 = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a
                .trim()
                .parse()
                .map_err(|_| perr(line, col, format!("bad number `{s}`")))?;
            let b: f64 = b
                .trim()
                .parse()
                .map_err(|_| perr(line, col, format!("bad number `{s}`")))?;
            a / b
        }
        None => s
            .parse()
            .map_err(|_| perr(line, col, format!("bad number `{s}`")))?,
    };
    if !v.is_finite() {
        return Err(perr(line, col, format!("number `{s}` is not finite")));
    }
    Ok(v)
}

fn parse_bool(s: &str, line: usize, col: usize) -> Result<bool, ModelError> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(perr(
            line,
            col,
            format!("expected true or false, found `{s}`"),
        )),
    }
}

/// `(re,im), (re,im), ...`; a bare number is a real entry.
fn parse_complex_list(s: &str, line: usize, col: usize) -> Result<Vec<Complex64>, ModelError> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        if let Some(after) = rest.strip_prefix('(') {
            let close = after
                .find(')')
                .ok_or_else(|| perr(line, col, "unclosed '(' in complex entry"))?;
            let (re, im) = after[..close]
                .split_once(',')
                .ok_or_else(|| perr(line, col, "complex entry must be `(re,im)`"))?;
            out.push(Complex64::new(
                parse_f64(re.trim(), line, col)?,
                parse_f64(im.trim(), line, col)?,
            ));
            rest = after[close + 1..].trim_start();
        } else {
            let end = rest.find(',').unwrap_or(rest.len());
            out.push(Complex64::new(
                parse_f64(rest[..end].trim(), line, col)?,
                0.0,
            ));
            rest = &rest[end..];
        }
        rest = rest.trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
        } else if !rest.is_empty() {
            return Err(perr(line, col, format!("expected ',' before `{rest}`")));
        }
    }
    if out.is_empty() {
        return Err(perr(line, col, "empty coefficient list"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FINITE: &str = "\
[space]
kind = finite
dim = 2

[state u]
coeffs = (1,0), (0,0)
[state v]
coeffs = (0,0), (1,0)
[state w]
coeffs = (1,0), (0,1)
normalize = true

[operator X]
matrix = (0,0), (1,0); (1,0), (0,0)

[operator N]
matrix = (0,0), (0,1); (0,0), (0,0)

[operator K]
matrix = 1, 0; 0, 1
antilinear = true
";

    const TRUNC: &str = "\
[space]
kind = truncated
[state u]
decay q = 3/4
[state v]
decay q = 3
[operator P]
diagonal p = 1
[operator B]
diagonal p = 0
";

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn finite_model_loads() {
        let m = load_model(FINITE).unwrap();
        assert_eq!(m.kind, SpaceKind::Finite { dim: 2 });
        assert_eq!(m.states.len(), 3);
        assert_eq!(
            m.domain_membership("u", "X", false).unwrap(),
            Membership::In
        );
        assert_eq!(m.domain_membership("w", "X", true).unwrap(), Membership::In);
    }

    #[test]
    fn truncated_facts() {
        let m = load_model(TRUNC).unwrap();
        assert_eq!(
            m.domain_membership("u", "P", false).unwrap(),
            Membership::Out
        );
        assert_eq!(
            m.domain_membership("v", "P", false).unwrap(),
            Membership::In
        );
        assert_eq!(
            m.domain_membership("u", "B", false).unwrap(),
            Membership::In
        );
        assert_eq!(
            m.domain_membership("u", "P", true).unwrap(),
            Membership::Out
        );
    }

    #[test]
    fn inner_products() {
        let m = load_model(FINITE).unwrap();
        assert_eq!(m.inner_product("u", "v", None).unwrap(), c(0.0, 0.0));
        assert!((m.inner_product("w", "w", None).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        let t = load_model(TRUNC).unwrap();
        assert!(matches!(
            t.inner_product("u", "v", None),
            Err(ModelError::MissingTruncation)
        ));
        // partial sum of n^(-15/4), independent loop
        let direct: f64 = (1..=1000).map(|n| (n as f64).powf(-3.75)).sum();
        let ip = t.inner_product("u", "v", Some(1000)).unwrap();
        assert!((ip.re - direct).abs() < 1e-12);
        assert!((ip.re - 1.101791).abs() < 1e-6);
    }

    #[test]
    fn operator_action() {
        let m = load_model(FINITE).unwrap();
        let xv = m.apply_operator("X", "u", None).unwrap();
        assert_eq!(xv.as_slice(), &[c(0.0, 0.0), c(1.0, 0.0)]);
        let t = load_model(TRUNC).unwrap();
        let pu = t.apply_operator("P", "u", Some(4)).unwrap();
        for (k, z) in pu.iter().enumerate() {
            let n = (k + 1) as f64;
            assert!((z.re - n.powf(0.25)).abs() < 1e-12);
        }
    }

    #[test]
    fn antilinear_conjugates() {
        let m = load_model(FINITE).unwrap();
        let (k, anti) = m.operator_matrix("K", None).unwrap();
        let v = DVector::from_vec(vec![c(0.0, 1.0), c(0.0, 0.0)]);
        assert_eq!(
            apply_matrix(&k, anti, &v).as_slice(),
            &[c(0.0, -1.0), c(0.0, 0.0)]
        );
    }

    #[test]
    fn adjoint_of_nilpotent() {
        let m = load_model(FINITE).unwrap();
        let a = m.adjoint_matrix("N", None).unwrap();
        assert_eq!(a[(1, 0)], c(0.0, -1.0));
        assert_eq!(a[(0, 1)], c(0.0, 0.0));
        let t = load_model(TRUNC).unwrap();
        assert_eq!(
            t.adjoint_matrix("P", Some(5)).unwrap(),
            t.operator_matrix("P", Some(5)).unwrap().0
        );
    }

    #[test]
    fn slow_state_is_rejected() {
        let text = "[space]\nkind = truncated\n[state s]\ndecay q = 0.5\n";
        assert!(matches!(
            load_model(text),
            Err(ModelError::Invariant {
                rule: "norm-finite",
                ..
            })
        ));
    }

    #[test]
    fn parse_errors_have_positions() {
        let err = load_model("[space]\nkind = finite\ndim = x\n").unwrap_err();
        assert!(matches!(err, ModelError::Parse { line: 3, .. }), "{err}");
        let err =
            load_model("[space]\nkind = finite\ndim = 2\n[state u]\ncoeffs = (1,0\n").unwrap_err();
        assert!(matches!(err, ModelError::Parse { line: 5, .. }), "{err}");
    }

    #[test]
    fn standard_basis_and_overrides() {
        let text = "[space]\nkind = finite\ndim = 3\n[basis e]\nrule = standard\n";
        let m = load_model(text).unwrap();
        assert_eq!(m.basis_labels("e", None).unwrap(), vec!["e1", "e2", "e3"]);
        let bad = "[space]\nkind = finite\ndim = 2\n[state a]\ncoeffs = 1, 0\n[state b]\ncoeffs = 1, 1\n[basis x]\nstates = a, b\n";
        assert!(matches!(
            load_model(bad),
            Err(ModelError::Invariant {
                rule: "orthonormal-basis",
                ..
            })
        ));
        let t = format!("{TRUNC}[domain]\nunknown u P\nin v dag(P)\n");
        let m = load_model(&t).unwrap();
        assert_eq!(
            m.domain_membership("u", "P", false).unwrap(),
            Membership::Unknown
        );
    }

    #[test]
    fn unknown_names() {
        let m = load_model(TRUNC).unwrap();
        assert!(matches!(
            m.domain_membership("zz", "P", false),
            Err(ModelError::UnknownState(_))
        ));
        assert!(matches!(
            m.domain_membership("u", "Q", false),
            Err(ModelError::UnknownOperator(_))
        ));
    }
}
