//! Change-level ("just-in-time") defect prediction laboratory.
//!
//! The crate covers the whole curation and modelling pipeline:
//!
//! * [`vcs`] walks a git repository and materializes commits, per-file
//!   line-level deltas and blame queries.
//! * [`szz`] links issues to bug-fixing changes and traces candidate
//!   bug-introducing changes, with the cosmetic, date and suspicious-change
//!   filters.
//! * [`metrics`] computes the change properties (size, diffusion, history,
//!   author/reviewer experience, review) for every change.
//! * [`curation`] stores rater labels, computes agreement, applies the
//!   filtering ledger and stratifies changes into periods.
//! * [`model`] prunes collinear and redundant properties, expands survivors
//!   into restricted cubic splines and fits a logistic model.
//! * [`eval`] scores models (AUC, Brier), runs the short/long period
//!   schemes and computes Wald family importance and its stability.
//! * [`stats`] holds the rank-based statistics used throughout.
//! * [`pipeline`] wires the stages together with staged, resumable
//!   persistence.
//! * [`fixture`] generates a small deterministic demo corpus.

pub mod curation;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod stats;
pub mod szz;
pub mod time;
pub mod vcs;

pub use error::{Error, Result};
