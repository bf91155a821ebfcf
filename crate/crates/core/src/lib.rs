//! Cross-condition preference learning for a translation model that runs
//! under two input conditions: the source sentence alone, and the source
//! sentence with its preceding document context.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! - [`corpus`]: document-aware data model, vocabulary, context windows and a
//!   synthetic context-dependent translation task.
//! - [`policy`]: a tiny conditional recurrent model with exact gradients.
//! - [`scoring`]: deterministic proxy quality scorers.
//! - [`pairs`]: intra- and cross-condition preference pair construction.
//! - [`objective`]: the CPO / C-CPO / intra / cross / CPL losses.
//! - [`trainer`]: cold-start likelihood training and preference training.
//! - [`evalkit`]: evaluation and analysis harness.
//! - [`pipeline`]: hash-chained on-disk stages driven by the `cpl` binary.

pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod objective;
pub mod pairs;
pub mod pipeline;
pub mod policy;
pub mod scoring;
pub mod trainer;

pub use error::{Error, Result};
