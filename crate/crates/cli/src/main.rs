//! `repfree`: parse, check, convert, rewrite and evaluate slash and bra-ket
//! expressions from the command line.
//!
//! Exit codes: 0 clean, 1 parse error, 2 check or conversion error, 3 model
//! or I/O error, 4 a demo invariant failed, 64 bad invocation.

mod input;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use repfree::ast::{
    render_braket_with, render_latex_with, render_slash_with, Expr, LatexDialect, RenderContext,
};
use repfree::checker::{check_with, explain, CheckOptions};
use repfree::model::{load_model, HilbertModel};
use repfree::numeric::{self, EvalOptions, NumericError, SweepReport};
use repfree::parser::{Notation, NotationHint};
use repfree::rewriter::{self, Basis, Rewritten, Site};
use serde::Serialize;

use input::{Input, Parsed};
use output::{Out, Severity as Sev};

const EXIT_PARSE: u8 = 1;
const EXIT_CHECK: u8 = 2;
const EXIT_MODEL: u8 = 3;
const EXIT_INVARIANT: u8 = 4;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(
    name = "repfree",
    version,
    about = "Slash and bra-ket notation toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the expression tree and detected notation.
    Parse(Common),
    /// Check expressions against a model's operator domains.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        model: PathBuf,
        /// Read <u|O|v> as <u|(O|v>) before checking.
        #[arg(long)]
        acts_right: bool,
    },
    /// Convert between notations.
    Convert {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        to: Target,
        /// Model supplying anti-linear operators and adjoint names.
        #[arg(short, long)]
        model: Option<PathBuf>,
    },
    /// Evaluate expressions on a model.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        model: PathBuf,
        /// Truncation level, required for truncated models.
        #[arg(short = 'N', long = "truncation")]
        n: Option<usize>,
        /// Evaluate expressions the checker rejects.
        #[arg(long)]
        force: bool,
        /// Bind a scalar symbol: `c=1.5` or `c=0.5,-2` (real, imaginary).
        #[arg(long = "let", value_name = "NAME=VALUE")]
        bindings: Vec<String>,
    },
    /// Truncation sweeps on a truncated model.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        model: PathBuf,
        /// Comma-separated truncation levels.
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        /// sup_n |(u, O e_n)| for STATE:OP instead of evaluating expressions.
        #[arg(long, value_name = "STATE:OP", conflicts_with = "norm")]
        probe: Option<String>,
        /// Norms of the truncations of OP.
        #[arg(long, value_name = "OP")]
        norm: Option<String>,
        #[arg(long)]
        force: bool,
        /// Emit plot data with this separator instead of the table.
        #[arg(long, value_name = "SEP")]
        dsv: Option<char>,
    },
    /// Apply a rewrite and print the result.
    Rewrite {
        #[arg(value_enum)]
        rule: RewriteKind,
        #[command(flatten)]
        common: Common,
        #[arg(short, long)]
        model: Option<PathBuf>,
        /// Basis for `identity`: a model basis name, or a comma-separated
        /// list of state labels.
        #[arg(long)]
        basis: Option<String>,
        /// `dot[:k]`, `around[:k]` or `apply[:k]`.
        #[arg(long, default_value = "dot")]
        site: String,
        /// Truncation used to expand a standard basis of a truncated model.
        #[arg(short = 'N', long = "truncation")]
        n: Option<usize>,
        /// Print each rewrite step.
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum)]
        to: Option<Notation2>,
    },
    /// Run a built-in demonstration.
    Demo {
        #[arg(value_enum)]
        scenario: Scenario,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Explain a diagnostic rule.
    Explain { rule: String },
}

#[derive(Args)]
struct Common {
    /// Inline expression; may be repeated.
    #[arg(short = 'e', long = "expr")]
    exprs: Vec<String>,
    /// Expression files, one expression per line (`-` for stdin).
    files: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Hint::Auto)]
    notation: Hint,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Hint {
    Auto,
    Slash,
    Braket,
}

impl From<Hint> for NotationHint {
    fn from(h: Hint) -> Self {
        match h {
            Hint::Auto => NotationHint::Auto,
            Hint::Slash => NotationHint::Slash,
            Hint::Braket => NotationHint::Braket,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Structured,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Slash,
    Braket,
    LatexSlash,
    LatexBraket,
}

#[derive(Clone, Copy, ValueEnum)]
enum Notation2 {
    Slash,
    Braket,
}

#[derive(Clone, Copy, ValueEnum)]
enum RewriteKind {
    Simplify,
    Adjoint,
    Expand,
    Identity,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Unbounded,
    Riesz,
    Hellinger,
    Schwarz,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let mut out = Out::new();
    match run(cli.command, &mut out) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            out.error(&format!("{e:#}"));
            ExitCode::from(EXIT_MODEL)
        }
    }
}

fn load(path: &PathBuf) -> Result<HilbertModel> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    load_model(&text).with_context(|| format!("{}", path.display()))
}

type Item = std::result::Result<Parsed, (input::Loc, repfree::parser::ParseError)>;

/// Parses every input. Returns the items in input order and whether any
/// failed to parse.
fn parse_all(common: &Common) -> Result<(Vec<Item>, bool)> {
    let inputs = Input::collect(&common.exprs, &common.files)?;
    let items = input::parse_inputs(&inputs, common.notation.into());
    let failed = items.iter().any(|i| i.is_err());
    Ok((items, failed))
}

/// Reports a parse failure in place, so output keeps input order.
fn accept<'a>(item: &'a Item, common: &Common, out: &mut Out) -> Option<&'a Parsed> {
    match item {
        Ok(p) => Some(p),
        Err((loc, err)) => {
            if common.format == Format::Structured {
                out.record(&output::Located::new(loc, output::ErrorRecord::parse(err)));
            } else {
                out.diag(
                    &format!("{}:{}:{}:", loc.source, err.span.line, err.span.column),
                    Sev::Error,
                    &err.message,
                );
            }
            None
        }
    }
}

fn finish(parse_failed: bool, other_failed: bool) -> u8 {
    if parse_failed {
        EXIT_PARSE
    } else if other_failed {
        EXIT_CHECK
    } else {
        0
    }
}

fn run(cmd: Command, out: &mut Out) -> Result<u8> {
    match cmd {
        Command::Parse(common) => {
            let (items, failed) = parse_all(&common)?;
            for item in &items {
                let Some(p) = accept(item, &common, out) else {
                    continue;
                };
                if common.format == Format::Structured {
                    out.record(&output::Located::new(&p.loc, output::ParseRecord::new(p)));
                } else {
                    out.line(&format!("{}: {}", p.loc, p.result.notation));
                    for w in &p.result.warnings {
                        out.diag(&format!("{}:", p.loc), Sev::Warning, w);
                    }
                    out.text(&p.result.expr.dump());
                }
            }
            Ok(finish(failed, false))
        }
        Command::Check {
            common,
            model,
            acts_right,
        } => {
            let m = match load(&model) {
                Ok(m) => m,
                Err(e) => {
                    out.error(&format!("{e:#}"));
                    return Ok(EXIT_MODEL);
                }
            };
            let (items, failed) = parse_all(&common)?;
            let mut errors = false;
            for item in &items {
                let Some(p) = accept(item, &common, out) else {
                    continue;
                };
                let opts = CheckOptions {
                    notation: p.result.notation,
                    operator_acts_right: acts_right,
                };
                match check_with(&p.result.expr, &m, &opts) {
                    Ok(diags) => {
                        errors |= diags.iter().any(|d| d.is_error());
                        if common.format == Format::Structured {
                            if diags.is_empty() {
                                out.record(&output::Located::new(
                                    &p.loc,
                                    output::OkRecord::default(),
                                ));
                            }
                            for d in &diags {
                                out.record(&output::Located::new(&p.loc, d.to_record()));
                            }
                        } else if diags.is_empty() {
                            out.line(&format!("{}: ok", p.loc));
                        } else {
                            for d in &diags {
                                out.diagnostic(&p.loc, d);
                            }
                        }
                    }
                    Err(e) => {
                        errors = true;
                        if common.format == Format::Structured {
                            out.record(&output::Located::new(
                                &p.loc,
                                output::ErrorRecord::other("check", &e),
                            ));
                        } else {
                            out.diag(&format!("{}:", p.loc), Sev::Error, &e.to_string());
                        }
                    }
                }
            }
            Ok(finish(failed, errors))
        }
        Command::Convert { common, to, model } => {
            let ctx = match &model {
                Some(path) => match load(path) {
                    Ok(m) => m.display_context(),
                    Err(e) => {
                        out.error(&format!("{e:#}"));
                        return Ok(EXIT_MODEL);
                    }
                },
                None => RenderContext::default(),
            };
            let (items, failed) = parse_all(&common)?;
            let mut errors = false;
            for item in &items {
                let Some(p) = accept(item, &common, out) else {
                    continue;
                };
                match convert_one(&p.result.expr, to, &ctx) {
                    Ok(text) => {
                        if common.format == Format::Structured {
                            out.record(&output::Located::new(
                                &p.loc,
                                output::TextRecord { output: text },
                            ));
                        } else {
                            out.line(&text);
                        }
                    }
                    Err(msg) => {
                        errors = true;
                        if common.format == Format::Structured {
                            out.record(&output::Located::new(
                                &p.loc,
                                output::ErrorRecord::message("convert", msg),
                            ));
                        } else {
                            out.diag(&format!("{}:", p.loc), Sev::Error, &msg);
                        }
                    }
                }
            }
            Ok(finish(failed, errors))
        }
        Command::Eval {
            common,
            model,
            n,
            force,
            bindings,
        } => {
            let m = match load(&model) {
                Ok(m) => m,
                Err(e) => {
                    out.error(&format!("{e:#}"));
                    return Ok(EXIT_MODEL);
                }
            };
            if !m.is_finite() && n.is_none() {
                out.error("a truncated model needs a truncation level (-N)");
                return Ok(EXIT_MODEL);
            }
            let opts = EvalOptions {
                force,
                scalars: parse_bindings(&bindings)?,
            };
            let (items, failed) = parse_all(&common)?;
            let mut errors = false;
            for item in &items {
                let Some(p) = accept(item, &common, out) else {
                    continue;
                };
                match numeric::evaluate(&p.result.expr, &m, n, &opts) {
                    Ok(v) => {
                        if common.format == Format::Structured {
                            out.record(&output::Located::new(&p.loc, v.to_record()));
                        } else {
                            out.line(&v.to_string());
                        }
                    }
                    Err(e) => {
                        errors = true;
                        report_numeric(out, &common, &p.loc, &e);
                    }
                }
            }
            Ok(finish(failed, errors))
        }
        Command::Sweep {
            common,
            model,
            ns,
            probe,
            norm,
            force,
            dsv,
        } => {
            let m = match load(&model) {
                Ok(m) => m,
                Err(e) => {
                    out.error(&format!("{e:#}"));
                    return Ok(EXIT_MODEL);
                }
            };
            let emit = |out: &mut Out, label: &str, r: &SweepReport| {
                if common.format == Format::Structured {
                    out.record(&output::Located::labeled(label, r));
                } else if let Some(sep) = dsv {
                    out.text(&r.to_dsv(sep));
                } else {
                    out.line(&format!("# {label}"));
                    out.text(&r.to_table());
                }
            };
            if probe.is_some() || norm.is_some() {
                let (label, r) = if let Some(spec) = &probe {
                    let (state, op) = spec
                        .split_once(':')
                        .ok_or_else(|| anyhow!("--probe expects STATE:OP, got `{spec}`"))?;
                    (
                        format!("probe {spec}"),
                        numeric::unboundedness_probe(&m, state, op, &ns),
                    )
                } else {
                    let op = norm.as_deref().unwrap();
                    (
                        format!("norm {op}"),
                        numeric::operator_norm_sweep(&m, op, &ns),
                    )
                };
                return match r {
                    Ok(r) => {
                        emit(out, &label, &r);
                        Ok(0)
                    }
                    Err(e) => {
                        out.error(&e.to_string());
                        Ok(numeric_exit(&e))
                    }
                };
            }
            let opts = EvalOptions {
                force,
                ..Default::default()
            };
            let (items, failed) = parse_all(&common)?;
            let mut errors = false;
            for item in &items {
                let Some(p) = accept(item, &common, out) else {
                    continue;
                };
                match numeric::truncation_sweep(&p.result.expr, &m, &ns, &opts) {
                    Ok(r) => emit(out, &p.loc.to_string(), &r),
                    Err(e) => {
                        errors = true;
                        report_numeric(out, &common, &p.loc, &e);
                    }
                }
            }
            Ok(finish(failed, errors))
        }
        Command::Rewrite {
            common,
            rule,
            model,
            basis,
            site,
            n,
            trace,
            to,
        } => {
            let m = match model.as_ref().map(load).transpose() {
                Ok(m) => m,
                Err(e) => {
                    out.error(&format!("{e:#}"));
                    return Ok(EXIT_MODEL);
                }
            };
            let ctx = m
                .as_ref()
                .map(HilbertModel::render_context)
                .unwrap_or_default();
            let site: Site = site.parse().map_err(|e: String| anyhow!(e))?;
            let basis = match (rule, &basis) {
                (RewriteKind::Identity, None) => bail!("`rewrite identity` needs --basis"),
                (RewriteKind::Identity, Some(b)) => Some(resolve_basis(b, m.as_ref(), n)?),
                _ => None,
            };
            let (items, failed) = parse_all(&common)?;
            let mut errors = false;
            for item in &items {
                let Some(p) = accept(item, &common, out) else {
                    continue;
                };
                let e = &p.result.expr;
                let result: Result<Rewritten, rewriter::RewriteError> = match rule {
                    RewriteKind::Simplify => Ok(rewriter::simplify(e)),
                    RewriteKind::Adjoint => rewriter::adjoint_with(e, &ctx),
                    RewriteKind::Expand => Ok(rewriter::expand_linear_with(e, &ctx)),
                    RewriteKind::Identity => {
                        rewriter::insert_identity(e, basis.as_ref().unwrap(), site)
                    }
                };
                let notation = match to {
                    Some(Notation2::Slash) => Notation::Slash,
                    Some(Notation2::Braket) => Notation::Braket,
                    None => p.result.notation,
                };
                match result {
                    Ok(r) => {
                        let text = render_in(&r.expr, notation, &ctx);
                        if common.format == Format::Structured {
                            out.record(&output::Located::new(
                                &p.loc,
                                output::RewriteRecord::new(text, &r),
                            ));
                        } else {
                            if trace {
                                out.text(&r.trace.render(notation, &ctx));
                            }
                            out.line(&text);
                        }
                    }
                    Err(err) => {
                        errors = true;
                        if common.format == Format::Structured {
                            out.record(&output::Located::new(
                                &p.loc,
                                output::ErrorRecord::other("rewrite", &err),
                            ));
                        } else {
                            out.diag(&format!("{}:", p.loc), Sev::Error, &err.to_string());
                        }
                    }
                }
            }
            Ok(finish(failed, errors))
        }
        Command::Demo {
            scenario,
            dim,
            seed,
            trials,
            format,
        } => demo(scenario, dim, seed, trials, format, out),
        Command::Explain { rule } => match explain(&rule) {
            Ok(text) => {
                out.line(text);
                Ok(0)
            }
            Err(e) => {
                out.error(&e.to_string());
                Ok(EXIT_USAGE)
            }
        },
    }
}

fn render_in(e: &Expr, notation: Notation, ctx: &RenderContext) -> String {
    match notation {
        Notation::Slash => render_slash_with(e, ctx),
        Notation::Braket => {
            let chained = rewriter::convert_with(e, Notation::Braket, ctx).expr;
            render_braket_with(&chained, ctx).unwrap_or_else(|_| render_slash_with(e, ctx))
        }
    }
}

fn convert_one(e: &Expr, to: Target, ctx: &RenderContext) -> std::result::Result<String, String> {
    let slash = || rewriter::convert_with(e, Notation::Slash, ctx).expr;
    let braket = || rewriter::convert_with(e, Notation::Braket, ctx).expr;
    match to {
        Target::Slash => Ok(render_slash_with(&slash(), ctx)),
        Target::Braket => render_braket_with(&braket(), ctx).map_err(|u| u.to_string()),
        Target::LatexSlash => {
            render_latex_with(&slash(), LatexDialect::Slash, ctx).map_err(|u| u.to_string())
        }
        Target::LatexBraket => {
            render_latex_with(&braket(), LatexDialect::Braket, ctx).map_err(|u| u.to_string())
        }
    }
}

fn resolve_basis(spec: &str, m: Option<&HilbertModel>, n: Option<usize>) -> Result<Basis> {
    if let Some(m) = m {
        if m.bases.contains_key(spec) {
            return Ok(Basis::from_model(m, spec, n)?);
        }
    }
    let labels: Vec<String> = spec
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if labels.len() < 2 {
        bail!("--basis `{spec}` is neither a model basis nor a list of at least two labels");
    }
    Ok(Basis::new("basis", labels))
}

fn parse_bindings(bindings: &[String]) -> Result<BTreeMap<String, Complex64>> {
    bindings
        .iter()
        .map(|b| {
            let (name, value) = b
                .split_once('=')
                .ok_or_else(|| anyhow!("--let expects NAME=VALUE, got `{b}`"))?;
            let (re, im) = value.split_once(',').unwrap_or((value, "0"));
            let re: f64 = re
                .trim()
                .parse()
                .with_context(|| format!("bad real part in `{b}`"))?;
            let im: f64 = im
                .trim()
                .parse()
                .with_context(|| format!("bad imaginary part in `{b}`"))?;
            Ok((name.trim().to_string(), Complex64::new(re, im)))
        })
        .collect()
}

fn numeric_exit(e: &NumericError) -> u8 {
    match e {
        NumericError::Model(_) => EXIT_MODEL,
        _ => EXIT_CHECK,
    }
}

fn report_numeric(out: &mut Out, common: &Common, loc: &input::Loc, e: &NumericError) {
    if common.format == Format::Structured {
        match e {
            NumericError::Rejected(ds) => {
                for d in ds.iter().filter(|d| d.is_error()) {
                    out.record(&output::Located::new(loc, d.to_record()));
                }
            }
            other => out.record(&output::Located::new(
                loc,
                output::ErrorRecord::other("eval", other),
            )),
        }
    } else {
        out.diag(&format!("{loc}:"), Sev::Error, &e.to_string());
    }
}

#[derive(Serialize)]
struct DemoRecord<'a, T: Serialize> {
    demo: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(flatten)]
    result: T,
    ok: bool,
}

fn demo(
    scenario: Scenario,
    dim: usize,
    seed: u64,
    trials: Option<usize>,
    format: Format,
    out: &mut Out,
) -> Result<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ok = match scenario {
        Scenario::Unbounded => {
            let r = numeric::demo_unbounded()?;
            // sup_{n <= N} n^(1/4) = N^(1/4)
            let ok =
                r.ns.iter()
                    .zip(&r.values)
                    .all(|(&n, v)| (v - (n as f64).powf(0.25)).abs() <= 1e-12 * v);
            if format == Format::Structured {
                out.record(&DemoRecord {
                    demo: "unbounded",
                    seed: None,
                    result: &r,
                    ok,
                });
            } else {
                out.line("u_n = n^-3/4, lambda_n = n: sup_{n<=N} |(u, P e_n)|");
                out.text(&r.to_table());
            }
            ok
        }
        Scenario::Hellinger => {
            let r = numeric::demo_hellinger()?;
            let ok = r.verdict == numeric::Verdict::Divergent;
            if format == Format::Structured {
                out.record(&DemoRecord {
                    demo: "hellinger",
                    seed: None,
                    result: &r,
                    ok,
                });
            } else {
                out.line("lambda_n = n: norm of the N-truncation");
                out.text(&r.to_table());
            }
            ok
        }
        Scenario::Riesz => {
            let r = numeric::demo_riesz(&mut rng, dim, trials.unwrap_or(100))?;
            let ok = r.max_residual <= 1e-12;
            if format == Format::Structured {
                out.record(&DemoRecord {
                    demo: "riesz",
                    seed: Some(seed),
                    result: &r,
                    ok,
                });
            } else {
                out.line(&format!(
                    "{} random functionals, dims 2..={}: max residual {:.3e} (tolerance 1e-12)",
                    r.trials, r.max_dim, r.max_residual
                ));
            }
            ok
        }
        Scenario::Schwarz => {
            let r = numeric::demo_schwarz(&mut rng, dim, trials.unwrap_or(1000))?;
            let ok = r.violations == 0;
            if format == Format::Structured {
                out.record(&DemoRecord {
                    demo: "schwarz",
                    seed: Some(seed),
                    result: &r,
                    ok,
                });
            } else {
                out.line(&format!(
                    "{} random pairs, dims 1..={}: {} violations of |(u,v)| <= |u||v| + 1e-12, largest slack {:.3e}",
                    r.pairs, r.max_dim, r.violations, r.worst_slack
                ));
            }
            ok
        }
    };
    Ok(if ok { 0 } else { EXIT_INVARIANT })
}
