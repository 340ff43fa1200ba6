use num_complex::Complex64;

use super::{Notation, ParseError, ParseErrorKind};
use crate::span::SourceSpan;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    State(String),
    Reduced(String, String, String),
    Bra(String),
    Ket(String),
    BraKet(String, String),
    Dot,
    Delim,
    Plus,
    Star,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Dagger,
    Ident(String),
    Complex(Complex64),
    Number(f64),
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::State(l) => format!("state /{l}/"),
            Tok::Reduced(..) => "reduced matrix element".into(),
            Tok::Bra(l) => format!("bra <{l}|"),
            Tok::Ket(l) => format!("ket |{l}>"),
            Tok::BraKet(a, b) => format!("bracket <{a}|{b}>"),
            Tok::Dot => "'.'".into(),
            Tok::Delim => "'^'".into(),
            Tok::Plus => "'+'".into(),
            Tok::Star => "'*'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBracket => "'['".into(),
            Tok::RBracket => "']'".into(),
            Tok::Dagger => "'†'".into(),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Complex(_) => "complex literal".into(),
            Tok::Number(_) => "number".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

/// First structural character decides: `/` means slash, `<`, `⟨` or `|`
/// mean bra-ket. Text with none of them is read as slash.
pub fn detect(text: &str) -> Notation {
    for c in text.chars() {
        match c {
            '/' => return Notation::Slash,
            '<' | '⟨' | '|' => return Notation::Braket,
            _ => {}
        }
    }
    Notation::Slash
}

struct Lexer<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    i: usize,
    line: usize,
    col: usize,
    base: usize,
    notation: Notation,
}

pub fn tokenize(
    src: &str,
    notation: Notation,
    base_line: usize,
    base_offset: usize,
) -> Result<Vec<Token>, ParseError> {
    let mut lx = Lexer {
        src,
        chars: src.char_indices().collect(),
        i: 0,
        line: base_line,
        col: 1,
        base: base_offset,
        notation,
    };
    let mut out = Vec::new();
    loop {
        let t = lx.next_token()?;
        let end = t.tok == Tok::Eof;
        out.push(t);
        if end {
            return Ok(out);
        }
    }
}

impl Lexer<'_> {
    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).map(|&(_, c)| c)
    }

    fn byte(&self, i: usize) -> usize {
        self.chars.get(i).map_or(self.src.len(), |&(b, _)| b)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek(0)?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span_from(&self, start_i: usize, line: usize, col: usize) -> SourceSpan {
        SourceSpan::new(
            self.base + self.byte(start_i),
            self.base + self.byte(self.i),
            line,
            col,
        )
    }

    fn here(&self) -> SourceSpan {
        let b = self.base + self.byte(self.i);
        let len = self.peek(0).map_or(0, char::len_utf8);
        SourceSpan::new(b, b + len, self.line, self.col)
    }

    fn error(&self, kind: ParseErrorKind, span: SourceSpan, msg: impl Into<String>) -> ParseError {
        ParseError {
            kind,
            message: msg.into(),
            span,
            expected: Vec::new(),
        }
    }

    fn mixed(&self, c: char) -> ParseError {
        let (this, other) = match self.notation {
            Notation::Slash => ("slash", "bra-ket"),
            Notation::Braket => ("bra-ket", "slash"),
        };
        self.error(
            ParseErrorKind::MixedNotation,
            self.here(),
            format!("mixed notation: '{c}' belongs to {other} notation inside a {this} expression"),
        )
    }

    fn next_token(&mut self) -> Result<Token, ParseError> {
        while self.peek(0).is_some_and(char::is_whitespace) {
            self.bump();
        }
        let (start, line, col) = (self.i, self.line, self.col);
        let Some(c) = self.peek(0) else {
            return Ok(Token {
                tok: Tok::Eof,
                span: self.here(),
            });
        };
        let tok = match (c, self.notation) {
            ('/', Notation::Slash) => {
                if self.peek(1) == Some('\\') {
                    self.bump();
                    self.bump();
                    Tok::Delim
                } else {
                    self.slash_state()?
                }
            }
            ('/', Notation::Braket) => return Err(self.mixed(c)),
            ('<' | '⟨', Notation::Braket) => self.bra()?,
            ('|', Notation::Braket) => self.ket()?,
            ('<' | '>' | '|' | '⟨' | '⟩', Notation::Slash) => return Err(self.mixed(c)),
            ('>' | '⟩', Notation::Braket) => {
                return Err(self.error(ParseErrorKind::Syntax, self.here(), "stray '>'"))
            }
            ('.' | '·', Notation::Slash) => {
                self.bump();
                Tok::Dot
            }
            ('.' | '·', Notation::Braket) => return Err(self.mixed(c)),
            ('^' | '∧', Notation::Slash) => {
                self.bump();
                Tok::Delim
            }
            ('^' | '∧', Notation::Braket) => {
                return Err(self.error(
                    ParseErrorKind::MixedNotation,
                    self.here(),
                    "the delimiter '^' is not defined in bra-ket notation; use '*'",
                ))
            }
            ('+', _) => {
                self.bump();
                Tok::Plus
            }
            ('*', _) => {
                self.bump();
                Tok::Star
            }
            ('(', _) => match self.complex_literal() {
                Some(z) => z,
                None => {
                    self.bump();
                    Tok::LParen
                }
            },
            (')', _) => {
                self.bump();
                Tok::RParen
            }
            ('[', _) => {
                self.bump();
                Tok::LBracket
            }
            (']', _) => {
                self.bump();
                Tok::RBracket
            }
            ('†', _) => {
                self.bump();
                Tok::Dagger
            }
            (c, _) if c.is_ascii_digit() => self.number(),
            (c, _) if c.is_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(c) = self.peek(0) {
                    if c.is_alphanumeric() || c == '_' || c == '\'' || c == '′' {
                        s.push(c);
                        self.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(s)
            }
            (c, _) => {
                return Err(self.error(
                    ParseErrorKind::Syntax,
                    self.here(),
                    format!("unexpected character '{c}'"),
                ))
            }
        };
        Ok(Token {
            tok,
            span: self.span_from(start, line, col),
        })
    }

    /// Reads a label up to (not including) one of `stops`. Returns `None`
    /// at end of input or newline.
    fn label_until(&mut self, stops: &[char]) -> Option<String> {
        let mut s = String::new();
        loop {
            match self.peek(0) {
                None | Some('\n') => return None,
                Some(c) if stops.contains(&c) => return Some(s),
                Some(c) => {
                    s.push(c);
                    self.bump();
                }
            }
        }
    }

    fn slash_state(&mut self) -> Result<Tok, ParseError> {
        let open = self.here();
        self.bump();
        let Some(label) = self.label_until(&['/']) else {
            return Err(self.error(
                ParseErrorKind::Syntax,
                open,
                "unterminated state: missing closing '/'",
            ));
        };
        self.bump();
        let label = label.trim().to_string();
        if label.is_empty() {
            return Err(self.error(ParseErrorKind::Syntax, open, "empty state label"));
        }
        if self.peek(0) == Some('/') {
            if let Some(tok) = self.try_reduced(&label) {
                return Ok(tok);
            }
        }
        Ok(Tok::State(label))
    }

    /// `/a//b//c/` after `/a/` has been read.
    fn try_reduced(&mut self, first: &str) -> Option<Tok> {
        let saved = (self.i, self.line, self.col);
        let mut parts = Vec::new();
        for _ in 0..2 {
            if self.peek(0) != Some('/') {
                break;
            }
            self.bump();
            match self.label_until(&['/']) {
                Some(l) if !l.trim().is_empty() => {
                    self.bump();
                    parts.push(l.trim().to_string());
                }
                _ => break,
            }
        }
        if parts.len() == 2 {
            Some(Tok::Reduced(
                first.to_string(),
                parts.remove(0),
                parts.remove(0),
            ))
        } else {
            (self.i, self.line, self.col) = saved;
            None
        }
    }

    fn check_label(&self, label: &str, open: SourceSpan) -> Result<String, ParseError> {
        let t = label.trim();
        if t.is_empty() {
            return Err(self.error(ParseErrorKind::Syntax, open, "empty label"));
        }
        Ok(t.to_string())
    }

    fn bra(&mut self) -> Result<Tok, ParseError> {
        let open = self.here();
        if let Some(tok) = self.try_braket_reduced() {
            return Ok(tok);
        }
        self.bump();
        let Some(label) = self.label_until(&['|', '/', '<', '>', '⟨', '⟩']) else {
            return Err(self.error(
                ParseErrorKind::Syntax,
                open,
                "unterminated bra: missing '|'",
            ));
        };
        match self.peek(0) {
            Some('|') => {}
            Some('/') => return Err(self.mixed('/')),
            _ => {
                return Err(self.error(
                    ParseErrorKind::Syntax,
                    self.here(),
                    "expected '|' closing the bra",
                ))
            }
        }
        self.bump();
        let a = self.check_label(&label, open)?;
        // `<a|b>` is one token when nothing structural sits before the `>`.
        let mut k = 0;
        let mut inner = String::new();
        loop {
            match self.peek(k) {
                Some('>' | '⟩') => break,
                None | Some('\n' | '|' | '<' | '⟨' | '(' | ')' | '/') => return Ok(Tok::Bra(a)),
                Some(c) => inner.push(c),
            }
            k += 1;
        }
        if inner.trim().is_empty() {
            return Ok(Tok::Bra(a));
        }
        for _ in 0..=k {
            self.bump();
        }
        Ok(Tok::BraKet(a, inner.trim().to_string()))
    }

    /// `<a||b||c>`.
    fn try_braket_reduced(&mut self) -> Option<Tok> {
        let rest: String = self.chars[self.i + 1..].iter().map(|&(_, c)| c).collect();
        let close = rest.find(['>', '⟩'])?;
        let inner = &rest[..close];
        let parts: Vec<&str> = inner.split("||").collect();
        if parts.len() != 3
            || parts
                .iter()
                .any(|p| p.trim().is_empty() || p.contains(['|', '<', '\n']))
        {
            return None;
        }
        let count = 1 + inner.chars().count() + 1;
        for _ in 0..count {
            self.bump();
        }
        Some(Tok::Reduced(
            parts[0].trim().to_string(),
            parts[1].trim().to_string(),
            parts[2].trim().to_string(),
        ))
    }

    fn ket(&mut self) -> Result<Tok, ParseError> {
        let open = self.here();
        self.bump();
        let Some(label) = self.label_until(&['>', '⟩', '|', '<', '/', '⟨']) else {
            return Err(self.error(
                ParseErrorKind::Syntax,
                open,
                "unterminated ket: missing '>'",
            ));
        };
        match self.peek(0) {
            Some('>' | '⟩') => {}
            Some('/') => return Err(self.mixed('/')),
            _ => {
                return Err(self.error(
                    ParseErrorKind::Syntax,
                    self.here(),
                    "expected '>' closing the ket",
                ))
            }
        }
        self.bump();
        Ok(Tok::Ket(self.check_label(&label, open)?))
    }

    fn number(&mut self) -> Tok {
        let start = self.i;
        let text = self.scan_number(0).unwrap_or(0);
        for _ in 0..text {
            self.bump();
        }
        let s: String = self.chars[start..self.i].iter().map(|&(_, c)| c).collect();
        Tok::Number(s.parse().unwrap_or(f64::NAN))
    }

    /// Length in chars of an unsigned decimal number starting at offset `k`.
    fn scan_number(&self, k: usize) -> Option<usize> {
        let mut n = 0;
        let digits = |n: &mut usize| {
            let s = *n;
            while self.peek(k + *n).is_some_and(|c| c.is_ascii_digit()) {
                *n += 1;
            }
            *n > s
        };
        if !digits(&mut n) {
            return None;
        }
        if self.peek(k + n) == Some('.') && self.peek(k + n + 1).is_some_and(|c| c.is_ascii_digit())
        {
            n += 1;
            digits(&mut n);
        }
        if matches!(self.peek(k + n), Some('e' | 'E')) {
            let mut m = n + 1;
            if matches!(self.peek(k + m), Some('+' | '-')) {
                m += 1;
            }
            if self.peek(k + m).is_some_and(|c| c.is_ascii_digit()) {
                n = m;
                digits(&mut n);
            }
        }
        Some(n)
    }

    /// `(re+imi)` or `(re-imi)`, optional signs and spaces.
    fn complex_literal(&mut self) -> Option<Tok> {
        let mut k = 1;
        let skip_ws = |k: &mut usize| {
            while self.peek(*k).is_some_and(|c| c == ' ' || c == '\t') {
                *k += 1;
            }
        };
        let collect = |from: usize, to: usize| -> String {
            self.chars[self.i + from..self.i + to]
                .iter()
                .map(|&(_, c)| c)
                .collect()
        };
        skip_ws(&mut k);
        let re_start = k;
        if matches!(self.peek(k), Some('+' | '-')) {
            k += 1;
        }
        k += self.scan_number(k)?;
        let re: f64 = collect(re_start, k).parse().ok()?;
        skip_ws(&mut k);
        let sign = match self.peek(k)? {
            '+' => 1.0,
            '-' => -1.0,
            _ => return None,
        };
        k += 1;
        skip_ws(&mut k);
        let im_start = k;
        k += self.scan_number(k)?;
        let im: f64 = collect(im_start, k).parse().ok()?;
        if self.peek(k) != Some('i') {
            return None;
        }
        k += 1;
        skip_ws(&mut k);
        if self.peek(k) != Some(')') {
            return None;
        }
        for _ in 0..=k {
            self.bump();
        }
        Some(Tok::Complex(Complex64::new(re, sign * im)))
    }
}
