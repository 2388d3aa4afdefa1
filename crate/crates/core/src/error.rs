use std::fmt;

use thiserror::Error;

/// A position in a source document, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Span {
    pub line: usize,
    pub col: usize,
}

impl Span {
    pub fn new(line: usize, col: usize) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

/// A located problem found while reading a model document.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub span: Span,
    pub message: String,
}

impl Diagnostic {
    pub fn new(span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            span,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}", self.message, self.span)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown state `{0}`")]
    UnknownState(String),

    #[error("unknown action `{0}`")]
    UnknownAction(String),

    #[error("unknown observation `{0}`")]
    UnknownObservation(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("trajectory has {have} steps but the criterion needs {need}")]
    TrajectoryTooShort { have: usize, need: usize },

    #[error("observation has zero probability under the current belief")]
    ImpossibleObservation,

    #[error("no observation distribution for ({prior}, {action}, {post})")]
    MissingObservation {
        prior: String,
        action: String,
        post: String,
    },

    #[error("invalid criterion: {0}")]
    Criterion(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("linear system for policy evaluation is singular")]
    Singular,

    #[error("no convergence after {iterations} iterations (residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("events are not commutative: {0}")]
    CompositionOrder(String),

    #[error("malformed decision tree: {0}")]
    MalformedTree(String),

    #[error("unsupported structure: {0}")]
    Unsupported(String),

    #[error("model has {states} states, above the grounding cap of {cap}")]
    TooLarge { states: u128, cap: u128 },

    #[error("variable set is not relevance-closed: {0}")]
    NotClosed(String),

    #[error("partition is not stable: {0}")]
    Unstable(String),

    #[error("state set leaks probability: action `{action}` at state `{state}` leaves the set")]
    Leakage { state: String, action: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{}", format_diagnostics(.0))]
    Parse(Vec<Diagnostic>),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

pub type Result<T> = std::result::Result<T, Error>;
