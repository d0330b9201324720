//! Evaluation and optimization of priority-based fraud decision rule systems.
//!
//! A rule system is a set of rules with actions (accept, alert, decline),
//! priorities and optional blacklist side effects. Given historical rule
//! firings and fraud labels, this crate evaluates any candidate priority
//! vector and searches for configurations that minimize a user loss.

pub mod bits;
pub mod blacklist;
pub mod error;
pub mod eval;
pub mod io;
pub mod loss;
pub mod model;
pub mod optimize;
pub mod pipeline;
pub mod synth;
pub mod tcv;

pub use error::{Error, Result};
