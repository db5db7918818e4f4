//! Named simulation suites.
//!
//! | name | suite |
//! |------|-------|
//! | `t1` | with replacement, binary populations, ALPHA vs. BRAVO over (θ, η) |
//! | `t2` | without replacement, N = 20,000: capped at 2,000 with a full count after, and uncapped |
//! | `t3` | without replacement, populations with blank cards |
//! | `t4` | geometric-mean-ratio summary of `t3` |
//! | `t5` | comparison-audit mixtures, mass at one in {0.99, 0.9, 0.75, 0.5} |
//! | `t6` | comparison-audit mixtures, mass at one in {0.25, 0.1, 0.01} |
//! | `t7` | geometric-mean-ratio summary of `t5` and `t6` |
//!
//! Defaults are sized for a workstation; `full` switches to the large
//! population sizes, replication counts, and the 10⁷ draw cap.

use serde::{Deserialize, Serialize};

use super::harness::{run_experiment, write_csv, Condition, CostRule, ResultRow};
use super::population::PopulationSpec;
use super::summary::{geo_mean_ratio_summary, SummaryRow};
use crate::martingale::{EstimatorSpec, Sampling, ShrinkTrunc, TestConfig};
use crate::methods::ComparatorSpec;
use crate::{Error, Result};

pub const TABLE_NAMES: [&str; 7] = ["t1", "t2", "t3", "t4", "t5", "t6", "t7"];

/// Default master seed for table generation.
pub const DEFAULT_SEED: u64 = 20_220_201;

/// Draw cap with replacement at full scale.
pub const FULL_WR_CAP: u64 = 10_000_000;

/// Draw cap with replacement at desk scale.
pub const DESK_WR_CAP: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    /// Overrides the replication count.
    pub reps: Option<u64>,
    /// Overrides the draw cap for suites that use one.
    pub cap: Option<u64>,
    pub seed: u64,
    pub alpha: f64,
    pub full: bool,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self { reps: None, cap: None, seed: DEFAULT_SEED, alpha: 0.05, full: false }
    }
}

impl TableOptions {
    fn reps(&self, desk: u64, full: u64) -> u64 {
        self.reps.unwrap_or(if self.full { full } else { desk })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableOutput {
    Cells(Vec<ResultRow>),
    Summary(Vec<SummaryRow>),
}

impl TableOutput {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> std::io::Result<()> {
        match self {
            Self::Cells(rows) => write_csv(rows, writer),
            Self::Summary(rows) => {
                let mut w = csv::Writer::from_writer(writer);
                for row in rows {
                    w.serialize(row).map_err(std::io::Error::other)?;
                }
                w.flush()
            }
        }
    }
}

fn unit_config() -> TestConfig {
    TestConfig::with_replacement(0.05, 1.0, 0.5)
}

fn alpha_method(eta: f64, d: f64) -> ComparatorSpec {
    ComparatorSpec::alpha(EstimatorSpec::ShrinkTrunc(ShrinkTrunc::new(eta, d, &unit_config())))
}

fn wor_conditions(pops: Vec<PopulationSpec>) -> Vec<Condition> {
    pops.into_iter()
        .map(|population| Condition {
            population,
            sampling: Sampling::WithoutReplacement,
            cap: None,
            cost: CostRule::Observed,
        })
        .collect()
}

pub fn table1_setup(opts: &TableOptions) -> (Vec<Condition>, Vec<ComparatorSpec>, u64) {
    let grid = [0.505, 0.51, 0.52, 0.53, 0.54, 0.55, 0.6, 0.65, 0.7];
    let cap = opts.cap.unwrap_or(if opts.full { FULL_WR_CAP } else { DESK_WR_CAP });
    let conditions = grid
        .iter()
        .map(|&theta| Condition {
            population: PopulationSpec::binary(theta, 10_000),
            sampling: Sampling::WithReplacement,
            cap: Some(cap),
            cost: CostRule::Observed,
        })
        .collect();
    let mut methods = Vec::new();
    for &eta in &grid {
        for d in [10.0, 100.0, 500.0, 1000.0] {
            methods.push(alpha_method(eta, d));
        }
        methods.push(ComparatorSpec::alpha(EstimatorSpec::Fixed { eta }));
    }
    (conditions, methods, opts.reps(1000, 1000))
}

pub fn table2_setup(opts: &TableOptions) -> (Vec<Condition>, Vec<ComparatorSpec>, u64) {
    let n = 20_000;
    let cap = opts.cap.unwrap_or(2000).min(n);
    let thetas = [0.505, 0.51, 0.52, 0.55, 0.6, 0.64, 0.7];
    let mut conditions = Vec::new();
    for (cap, cost) in [(Some(cap), CostRule::RecountAddIn), (None, CostRule::Observed)] {
        for &theta in &thetas {
            conditions.push(Condition {
                population: PopulationSpec::binary(theta, n),
                sampling: Sampling::WithoutReplacement,
                cap,
                cost,
            });
        }
    }
    let etas = [0.51, 0.55, 0.7];
    let mut methods = Vec::new();
    methods.extend(etas.iter().map(|&eta| ComparatorSpec::AprioriKelly { eta }));
    methods.push(ComparatorSpec::sq_kelly());
    methods.extend(etas.iter().map(|&eta| ComparatorSpec::SprtWor { eta }));
    for &eta in &etas {
        for d in [10.0, 100.0, 500.0, 1000.0] {
            methods.push(alpha_method(eta, d));
        }
    }
    (conditions, methods, opts.reps(1000, 100_000))
}

pub fn table3_setup(opts: &TableOptions) -> (Vec<Condition>, Vec<ComparatorSpec>, u64) {
    let sizes: &[u64] = if opts.full { &[10_000, 100_000, 500_000] } else { &[10_000] };
    let thetas = [0.51, 0.52, 0.55, 0.6, 0.7];
    let mut pops = Vec::new();
    for &n in sizes {
        for &theta in &thetas {
            for b in [0.1, 0.25, 0.5, 0.75] {
                pops.push(PopulationSpec::blanks(theta, b, n));
            }
        }
    }
    let mut methods = vec![ComparatorSpec::sq_kelly()];
    for &eta in &thetas {
        methods.push(ComparatorSpec::AprioriKelly { eta });
        for d in [10.0, 100.0, 1000.0, f64::INFINITY] {
            methods.push(alpha_method(eta, d));
        }
    }
    (wor_conditions(pops), methods, opts.reps(200, 10_000))
}

fn comparison_setup(masses: &[f64], opts: &TableOptions) -> (Vec<Condition>, Vec<ComparatorSpec>, u64) {
    let sizes: &[u64] = if opts.full { &[10_000, 100_000, 500_000] } else { &[10_000] };
    let pops = masses.iter().flat_map(|&m| sizes.iter().map(move |&n| PopulationSpec::comparison_mix(m, n))).collect();
    (wor_conditions(pops), comparison_methods(), opts.reps(1000, 10_000))
}

/// Methods compared on comparison-audit populations.
pub fn comparison_methods() -> Vec<ComparatorSpec> {
    let mut methods = vec![ComparatorSpec::sq_kelly()];
    for eta in [0.99, 0.9, 0.75, 0.55] {
        methods.push(ComparatorSpec::AprioriKelly { eta });
        for d in [10.0, 100.0] {
            methods.push(alpha_method(eta, d));
        }
    }
    methods.extend([0.01, 0.1, 0.2].map(|g| ComparatorSpec::KaplanKolmogorov { g }));
    methods.extend([0.99, 0.9, 0.8].map(|g| ComparatorSpec::KaplanWald { g }));
    methods
}

pub const TABLE5_MASSES: [f64; 4] = [0.99, 0.9, 0.75, 0.5];
pub const TABLE6_MASSES: [f64; 3] = [0.25, 0.1, 0.01];

fn run(setup: (Vec<Condition>, Vec<ComparatorSpec>, u64), opts: &TableOptions) -> Result<Vec<ResultRow>> {
    let (conditions, methods, reps) = setup;
    run_experiment(&conditions, &methods, reps, opts.seed, opts.alpha)
}

/// Generates the named suite.
pub fn generate_table(name: &str, opts: &TableOptions) -> Result<TableOutput> {
    Ok(match name {
        "t1" => TableOutput::Cells(run(table1_setup(opts), opts)?),
        "t2" => TableOutput::Cells(run(table2_setup(opts), opts)?),
        "t3" => TableOutput::Cells(run(table3_setup(opts), opts)?),
        "t4" => TableOutput::Summary(geo_mean_ratio_summary(&run(table3_setup(opts), opts)?)?),
        "t5" => TableOutput::Cells(run(comparison_setup(&TABLE5_MASSES, opts), opts)?),
        "t6" => TableOutput::Cells(run(comparison_setup(&TABLE6_MASSES, opts), opts)?),
        "t7" => {
            let mut rows = run(comparison_setup(&TABLE5_MASSES, opts), opts)?;
            rows.extend(run(comparison_setup(&TABLE6_MASSES, opts), opts)?);
            TableOutput::Summary(geo_mean_ratio_summary(&rows)?)
        }
        other => return Err(Error::UnknownTable(other.to_string())),
    })
}
