//! Representation-free notation toolkit.
//!
//! Parses slash notation (`/u/ . O/v/`) and Dirac bra-ket notation
//! (`<u|O|v>`) into one expression tree, checks expressions against the
//! operator domains of a Hilbert-space model, rewrites between notations,
//! and evaluates expressions numerically on finite or truncated models.

pub mod ast;
pub mod checker;
pub mod model;
pub mod numeric;
pub mod parser;
pub mod rewriter;
pub mod span;
