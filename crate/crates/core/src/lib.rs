//! Paragraph retrieval over a single long document.
//!
//! Sentences are scored two ways: by the cross-attention a causal language
//! model pays to them while reading the query ([`attnscore`]), and by
//! embedding similarity to the query ([`embscore`]). Each view picks its
//! own top sentences and entities ([`retrieve`]), and every paragraph that
//! holds a picked sentence or mentions a picked entity is returned.
//!
//! [`analysis`] holds the tooling used to choose retrieval layers, and
//! [`eval`] the F-1 harness.

pub mod analysis;
pub mod attnscore;
pub mod backend;
mod clock;
pub mod config;
pub mod corpus;
pub mod embscore;
pub mod entity;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod rank;
pub mod retrieve;
pub mod tokenize;

pub use error::{Error, Result};
