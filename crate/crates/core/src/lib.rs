//! Time-series missing-value imputation toolkit.
//!
//! Load or synthesize a table with a time column, hide cells under a chosen
//! missingness mechanism, fill them with one of several imputers, and score
//! the fills against the hidden truth.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod impute;
pub mod masking;
pub mod metrics;
pub mod neural;
pub mod par;
pub mod rng;
pub mod synth;
pub mod table;
pub mod time_encoding;

pub use error::{Error, Result};
pub use impute::{ImputationResult, ImputerSpec};
pub use masking::{Mask, Mechanism};
pub use metrics::EvalReport;
pub use par::Execution;
pub use table::{Cell, Column, ColumnKind, Table, TimeFormat};
