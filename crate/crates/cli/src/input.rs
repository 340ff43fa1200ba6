use std::fmt;
use std::io::Read;
use std::path::PathBuf;

use anyhow::{Context, Result};
use repfree::parser::{parse, parse_file, NotationHint, ParseError, ParseResult};

/// Where an expression came from: `-e` arguments are numbered `expr1`,
/// `expr2`, ...; files keep their path and stdin is `<stdin>`.
#[derive(Debug, Clone)]
pub struct Loc {
    pub source: String,
    pub line: usize,
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.source, self.line)
    }
}

pub enum Input {
    Inline { name: String, text: String },
    File { name: String, text: String },
}

impl Input {
    pub fn collect(exprs: &[String], files: &[PathBuf]) -> Result<Vec<Input>> {
        let mut out: Vec<Input> = exprs
            .iter()
            .enumerate()
            .map(|(i, t)| Input::Inline {
                name: format!("expr{}", i + 1),
                text: t.clone(),
            })
            .collect();
        for path in files {
            if path.as_os_str() == "-" {
                let mut text = String::new();
                std::io::stdin()
                    .read_to_string(&mut text)
                    .context("cannot read stdin")?;
                out.push(Input::File {
                    name: "<stdin>".into(),
                    text,
                });
            } else {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read {}", path.display()))?;
                out.push(Input::File {
                    name: path.display().to_string(),
                    text,
                });
            }
        }
        Ok(out)
    }
}

pub struct Parsed {
    pub loc: Loc,
    pub result: ParseResult,
}

pub fn parse_inputs(
    inputs: &[Input],
    hint: NotationHint,
) -> Vec<Result<Parsed, (Loc, ParseError)>> {
    let mut out = Vec::new();
    for input in inputs {
        match input {
            Input::Inline { name, text } => {
                let loc = Loc {
                    source: name.clone(),
                    line: 1,
                };
                out.push(match parse(text, hint) {
                    Ok(result) => Ok(Parsed { loc, result }),
                    Err(e) => Err((loc, e)),
                });
            }
            Input::File { name, text } => {
                for (line, r) in parse_file(text, hint) {
                    let loc = Loc {
                        source: name.clone(),
                        line,
                    };
                    out.push(match r {
                        Ok(result) => Ok(Parsed { loc, result }),
                        Err(e) => Err((loc, e)),
                    });
                }
            }
        }
    }
    out
}
