//! Model file formats and canonical output.

mod factored;
mod flat;
pub mod output;
pub mod sexpr;

pub use factored::{emit_factored, parse_factored};
pub use flat::{emit_flat, emit_flat_document, parse_flat, parse_flat_document, FlatDocument};
pub use output::*;

/// Factored documents are s-expressions; anything else is read as flat.
pub fn looks_factored(text: &str) -> bool {
    text.lines()
        .map(|l| l.trim_start())
        .find(|l| !l.is_empty() && !l.starts_with(';') && !l.starts_with('#'))
        .is_some_and(|l| l.starts_with('('))
}
