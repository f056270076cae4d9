//! Label extraction for German chest radiograph reports.
//!
//! The crate bundles a rule-based labeler ([`rules`]), a trainable
//! multi-head labeler ([`model`]), the evaluation protocol ([`eval`]) and a
//! synthetic report generator with known ground truth ([`corpus`]).

pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod rules;
pub mod schema;
pub mod text;

pub use error::{Error, Result};
pub use schema::{Finding, LabelValue, Report, ReportLabels, Source};
