//! Sequential tests of bounded-population means for risk-limiting audits.
//!
//! The crate is organised bottom-up:
//!
//! - [`martingale`]: the ALPHA test state machine, its estimators, and the
//!   Kaplan-Wald / Kaplan-Kolmogorov / mixture comparators.
//! - [`methods`]: a uniform [`SequentialTest`] wrapper over every comparator,
//!   used by the simulator and the audit service.
//! - [`assorters`]: plurality assorter and reported-result helpers.
//! - [`batch`]: batch-level audits with equal-probability or PPS sampling.
//! - [`sampling`]: seeded selection streams for live audits.
//! - [`sim`]: deterministic Monte-Carlo harness and the named experiment tables.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assorters;
pub mod batch;
mod error;
pub mod martingale;
pub mod methods;
pub mod sampling;
pub mod serde_ext;
pub mod sim;

pub use error::{Error, Result};
pub use martingale::{EstimatorSpec, Sampling, ShrinkTrunc, Status, TestConfig, TestState};
pub use methods::{ComparatorSpec, SequentialTest};
