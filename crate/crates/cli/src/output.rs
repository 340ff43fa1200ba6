use std::io::{IsTerminal, Write};

use repfree::ast::render_slash;
use repfree::checker::Diagnostic;
use repfree::parser::{ParseError, ParseErrorKind};
use repfree::rewriter::Rewritten;
use serde::Serialize;

use crate::input::{Loc, Parsed};

#[derive(Clone, Copy)]
pub enum Severity {
    Error,
    Warning,
    Info,
}

impl Severity {
    fn word(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
        }
    }

    fn color(self) -> &'static str {
        match self {
            Severity::Error => "\x1b[1;31m",
            Severity::Warning => "\x1b[1;33m",
            Severity::Info => "\x1b[1;36m",
        }
    }
}

/// Output sink. Results go to stdout; text-mode problems go to stderr,
/// except checker diagnostics, which are the result of `check`.
pub struct Out {
    color_out: bool,
    color_err: bool,
}

impl Out {
    pub fn new() -> Self {
        let mode = std::env::var("REPFREE_COLOR").unwrap_or_default();
        let pick = |tty: bool| match mode.as_str() {
            "always" => true,
            "never" => false,
            _ => tty,
        };
        Out {
            color_out: pick(std::io::stdout().is_terminal()),
            color_err: pick(std::io::stderr().is_terminal()),
        }
    }

    fn paint(on: bool, sev: Severity) -> String {
        if on {
            format!("{}{}\x1b[0m", sev.color(), sev.word())
        } else {
            sev.word().to_string()
        }
    }

    pub fn line(&mut self, s: &str) {
        let _ = writeln!(std::io::stdout().lock(), "{s}");
    }

    /// Writes `s`, adding a final newline if it lacks one.
    pub fn text(&mut self, s: &str) {
        if s.ends_with('\n') {
            let _ = write!(std::io::stdout().lock(), "{s}");
        } else {
            self.line(s);
        }
    }

    pub fn record<T: Serialize>(&mut self, r: &T) {
        let json = serde_json::to_string(r).expect("records serialize");
        self.line(&json);
    }

    /// `prefix severity: message` on stderr.
    pub fn diag(&mut self, prefix: &str, sev: Severity, msg: &str) {
        let word = Self::paint(self.color_err, sev);
        let _ = writeln!(std::io::stderr().lock(), "{prefix} {word}: {msg}");
    }

    pub fn error(&mut self, msg: &str) {
        let word = Self::paint(self.color_err, Severity::Error);
        let _ = writeln!(std::io::stderr().lock(), "repfree: {word}: {msg}");
    }

    /// A checker diagnostic on stdout, `loc: severity RULE line:col message`.
    pub fn diagnostic(&mut self, loc: &Loc, d: &Diagnostic) {
        let line = d.to_line();
        let sev = match d.severity {
            repfree::checker::Severity::Error => Severity::Error,
            repfree::checker::Severity::Warning => Severity::Warning,
            repfree::checker::Severity::Info => Severity::Info,
        };
        let rest = line.strip_prefix(sev.word()).unwrap_or(&line);
        let word = Self::paint(self.color_out, sev);
        self.line(&format!("{loc}: {word}{rest}"));
    }
}

/// A record tagged with its source location, for JSON-lines output.
#[derive(Serialize)]
pub struct Located<T: Serialize> {
    source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(flatten)]
    inner: T,
}

impl<T: Serialize> Located<T> {
    pub fn new(loc: &Loc, inner: T) -> Self {
        Located {
            source: loc.source.clone(),
            line: Some(loc.line),
            inner,
        }
    }

    pub fn labeled(label: &str, inner: T) -> Self {
        Located {
            source: label.to_string(),
            line: None,
            inner,
        }
    }
}

#[derive(Serialize)]
pub struct ParseRecord {
    notation: String,
    kind: &'static str,
    slash: String,
    warnings: Vec<String>,
}

impl ParseRecord {
    pub fn new(p: &Parsed) -> Self {
        use repfree::ast::Kind;
        ParseRecord {
            notation: p.result.notation.to_string(),
            kind: match p.result.expr.kind() {
                Kind::Vector => "vector",
                Kind::Covector => "covector",
                Kind::Scalar => "scalar",
                Kind::Operator => "operator",
            },
            slash: render_slash(&p.result.expr),
            warnings: p.result.warnings.clone(),
        }
    }
}

#[derive(Serialize)]
pub struct TextRecord {
    pub output: String,
}

#[derive(Serialize)]
pub struct ErrorRecord {
    severity: &'static str,
    stage: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<ParseErrorKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    column: Option<usize>,
    message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    expected: Vec<String>,
}

impl ErrorRecord {
    pub fn parse(e: &ParseError) -> Self {
        ErrorRecord {
            severity: "error",
            stage: "parse",
            kind: Some(e.kind),
            column: Some(e.span.column),
            message: e.message.clone(),
            expected: e.expected.clone(),
        }
    }

    pub fn message(stage: &'static str, message: String) -> Self {
        ErrorRecord {
            severity: "error",
            stage,
            kind: None,
            column: None,
            message,
            expected: Vec::new(),
        }
    }

    pub fn other(stage: &'static str, e: &dyn std::error::Error) -> Self {
        Self::message(stage, e.to_string())
    }
}

#[derive(Serialize)]
struct StepRecord {
    rule: &'static str,
    before: String,
    after: String,
}

#[derive(Serialize)]
pub struct RewriteRecord {
    output: String,
    steps: Vec<StepRecord>,
    notes: Vec<String>,
}

impl RewriteRecord {
    pub fn new(output: String, r: &Rewritten) -> Self {
        RewriteRecord {
            output,
            steps: r
                .trace
                .steps
                .iter()
                .map(|s| StepRecord {
                    rule: s.rule,
                    before: render_slash(&s.before),
                    after: render_slash(&s.after),
                })
                .collect(),
            notes: r.trace.notes.clone(),
        }
    }
}

#[derive(Serialize)]
pub struct OkRecord {
    severity: &'static str,
}

impl Default for OkRecord {
    fn default() -> Self {
        OkRecord { severity: "ok" }
    }
}
