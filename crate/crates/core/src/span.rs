//! Source locations and span-carrying leaves.

use serde::Serialize;

/// Byte range in the source text plus the 1-based line/column of its start.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub column: usize,
}

impl SourceSpan {
    pub fn new(start: usize, end: usize, line: usize, column: usize) -> Self {
        debug_assert!(start <= end);
        Self {
            start,
            end,
            line,
            column,
        }
    }

    /// Smallest span covering both.
    pub fn join(self, other: SourceSpan) -> SourceSpan {
        let (first, _) = if self.start <= other.start {
            (self, other)
        } else {
            (other, self)
        };
        SourceSpan {
            start: self.start.min(other.start),
            end: self.end.max(other.end),
            line: first.line,
            column: first.column,
        }
    }

    pub fn contains(&self, other: &SourceSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// A value tagged with an optional source span.
///
/// Equality ignores the span so that parsed trees compare equal to trees
/// built in code.
#[derive(Debug, Clone)]
pub struct Spanned<T> {
    pub node: T,
    pub span: Option<SourceSpan>,
}

impl<T> Spanned<T> {
    pub fn new(node: T) -> Self {
        Self { node, span: None }
    }

    pub fn at(node: T, span: SourceSpan) -> Self {
        Self {
            node,
            span: Some(span),
        }
    }
}

impl<T: PartialEq> PartialEq for Spanned<T> {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node
    }
}

impl<T> std::ops::Deref for Spanned<T> {
    type Target = T;

    fn deref(&self) -> &T {
        &self.node
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn join_covers_both() {
        let a = SourceSpan::new(4, 7, 1, 5);
        let b = SourceSpan::new(0, 2, 1, 1);
        let j = a.join(b);
        assert_eq!((j.start, j.end, j.column), (0, 7, 1));
        assert!(j.contains(&a) && j.contains(&b));
    }

    #[test]
    fn spanned_equality_ignores_location() {
        let a = Spanned::at("u".to_string(), SourceSpan::new(0, 3, 1, 1));
        let b = Spanned::new("u".to_string());
        assert_eq!(a, b);
    }
}
