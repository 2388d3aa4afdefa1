//! Decision-theoretic planning over flat and factored Markov decision
//! processes.

pub mod abstraction;
pub mod chain;
pub mod corpus;
pub mod dp;
pub mod error;
pub mod events;
pub mod factored;
pub mod io;
pub mod mdp;
pub mod random;
pub mod rng;
pub mod search;
pub mod svi;

pub use error::{Diagnostic, Error, Result, Span};
