//! Constrained text generation guided by an estimate of future constraint
//! satisfaction.
//!
//! Decoding ranks candidates by `log p(y | x) + lambda * R(y, C)`, where `C`
//! is a natural-language rendering of the constraint and `R` is estimated by
//! a language model. The crate provides:
//!
//! - [`backend`]: the language-model interface, a word-level n-gram model,
//!   an explicit table model and an HTTP client for remote models.
//! - [`constraint`]: constraint verbalization and the likelihood and Yes/No
//!   satisfaction scorers.
//! - [`decoder`]: beam search and reweighted nucleus sampling.
//! - [`eval`]: ranking benchmarks, coverage, distinct-n, substring recall,
//!   toxicity aggregation and lambda sweeps.
//! - [`cli`]: the batch runner behind the `futuregen` binary.

pub mod backend;
pub mod cli;
pub mod constraint;
pub mod decoder;
pub mod error;
pub mod eval;

pub use error::{Error, Result};
