//! Monte-Carlo harness for comparing sequential tests on synthetic populations.
//!
//! Every replication draws its randomness from a generator seeded by
//! [`seeding::replication_rng`], which depends only on the master seed, the
//! condition, and the replication index. Results are therefore identical for
//! any thread count, and all methods in one condition see the same samples.

pub mod harness;
pub mod population;
pub mod seeding;
pub mod summary;
pub mod tables;

pub use harness::{
    run_cell, run_experiment, run_replication, Condition, CostRule, ExperimentSpec, Replication, ResultRow,
};
pub use population::{PopulationKind, PopulationSpec};
pub use summary::{geo_mean_ratio_summary, SummaryRow};
pub use tables::{generate_table, TableOptions, TableOutput};
