//! Replications, cells, and experiment grids.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::population::PopulationSpec;
use super::seeding::{population_rng, replication_rng};
use crate::martingale::{Sampling, TestConfig};
use crate::methods::{ComparatorSpec, SequentialTest};
use crate::{Error, Result};

/// Null mean used by every simulated assertion.
pub const NULL_MEAN: f64 = 0.5;

/// How an unconfirmed replication is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostRule {
    /// The number of cards actually examined.
    Observed,
    /// A replication not confirmed by the cap proceeds to a full count and costs `N`.
    RecountAddIn,
}

/// Population, sampling mode, and stopping budget shared by the methods compared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub population: PopulationSpec,
    pub sampling: Sampling,
    /// Maximum number of draws; `None` runs without replacement to exhaustion.
    pub cap: Option<u64>,
    pub cost: CostRule,
}

impl Condition {
    pub fn validate(&self) -> Result<()> {
        self.population.validate()?;
        match (self.sampling, self.cap) {
            (Sampling::WithReplacement, None) => {
                Err(Error::InvalidConfig("sampling with replacement needs a cap".into()))
            }
            (_, Some(0)) => Err(Error::InvalidConfig("cap must be ≥ 1".into())),
            (Sampling::WithoutReplacement, Some(c)) if c > self.population.n => {
                Err(Error::InvalidConfig(format!("cap {c} exceeds population size {}", self.population.n)))
            }
            _ => Ok(()),
        }
    }

    /// Seeding key. Methods are deliberately excluded so that every method
    /// in a condition sees the same draws.
    pub fn key(&self) -> String {
        let mode = match self.sampling {
            Sampling::WithReplacement => "wr",
            Sampling::WithoutReplacement => "wor",
        };
        format!("{}|{mode}", self.population.key())
    }
}

/// One simulated cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub method: ComparatorSpec,
    pub condition: Condition,
    pub reps: u64,
    pub seed: u64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replication {
    /// Cards examined before stopping.
    pub sample_size: u64,
    pub rejected: bool,
    /// Stopped by the cap without rejecting.
    pub capped: bool,
    /// Sample size charged under the condition's cost rule.
    pub cost: u64,
}

/// Aggregated cell, one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub params: String,
    pub population: String,
    pub theta: Option<f64>,
    pub blank_fraction: Option<f64>,
    pub mass_one: Option<f64>,
    #[serde(rename = "N")]
    pub n: u64,
    pub mode: String,
    pub cap: Option<u64>,
    pub cost: String,
    pub alpha: f64,
    pub mean_n: f64,
    pub reject_rate: f64,
    pub reps: u64,
    /// Some replication hit the cap without rejecting.
    pub overflow: bool,
}

impl ResultRow {
    /// Label identifying the method and its parameters.
    pub fn method_label(&self) -> String {
        format!("{} {}", self.method, self.params)
    }

    /// Label identifying everything except the method.
    pub fn condition_label(&self) -> String {
        format!(
            "{}|{:?}|{:?}|{:?}|{}|{}|{:?}|{}",
            self.population, self.theta, self.blank_fraction, self.mass_one, self.n, self.mode, self.cap, self.cost
        )
    }
}

/// Permutation scratch space reused across replications without replacement.
struct Scratch {
    values: Vec<f64>,
    swaps: Vec<usize>,
}

impl Scratch {
    fn new(population: &[f64]) -> Self {
        Self { values: population.to_vec(), swaps: Vec::new() }
    }
}

/// Runs one replication, drawing from `population`.
pub fn run_replication<R: Rng + ?Sized>(
    method: &ComparatorSpec,
    population: &[f64],
    condition: &Condition,
    alpha: f64,
    rng: &mut R,
) -> Result<Replication> {
    let mut scratch = Scratch::new(population);
    replicate(method, condition, alpha, rng, &mut scratch)
}

fn replicate<R: Rng + ?Sized>(
    method: &ComparatorSpec,
    condition: &Condition,
    alpha: f64,
    rng: &mut R,
    scratch: &mut Scratch,
) -> Result<Replication> {
    let n = scratch.values.len();
    let config = match condition.sampling {
        Sampling::WithReplacement => TestConfig::with_replacement(alpha, 1.0, NULL_MEAN),
        Sampling::WithoutReplacement => TestConfig::without_replacement(alpha, 1.0, NULL_MEAN, n as u64),
    };
    let mut test = SequentialTest::new(method, config)?;
    let limit = match (condition.sampling, condition.cap) {
        (_, Some(c)) => c,
        (Sampling::WithoutReplacement, None) => n as u64,
        (Sampling::WithReplacement, None) => u64::MAX,
    };
    let mut taken = 0u64;
    let result = loop {
        if taken == limit {
            break Ok(false);
        }
        let x = match condition.sampling {
            Sampling::WithReplacement => scratch.values[rng.random_range(0..n)],
            Sampling::WithoutReplacement => {
                let j = taken as usize;
                let k = rng.random_range(j..n);
                scratch.values.swap(j, k);
                scratch.swaps.push(k);
                scratch.values[j]
            }
        };
        taken += 1;
        match test.step(x) {
            Ok(s) if s.status == crate::Status::Rejected => break Ok(true),
            Ok(s) if s.status == crate::Status::Exhausted => break Ok(false),
            Ok(_) => {}
            Err(e) => break Err(e),
        }
    };
    // Undo the partial shuffle so the scratch buffer is the population again.
    for (j, &k) in scratch.swaps.iter().enumerate().rev() {
        scratch.values.swap(j, k);
    }
    scratch.swaps.clear();
    let rejected = result?;
    let capped = !rejected && condition.cap == Some(taken);
    let cost = match condition.cost {
        CostRule::RecountAddIn if !rejected => n as u64,
        _ => taken,
    };
    Ok(Replication { sample_size: taken, rejected, capped, cost })
}

fn aggregate(method: &ComparatorSpec, condition: &Condition, alpha: f64, reps: &[Replication]) -> ResultRow {
    // Integer sums keep the aggregate independent of scheduling.
    let total: u128 = reps.iter().map(|r| r.cost as u128).sum();
    let rejected = reps.iter().filter(|r| r.rejected).count();
    let p = &condition.population;
    ResultRow {
        method: method.name().to_string(),
        params: method.params(),
        population: p.name().to_string(),
        theta: p.theta(),
        blank_fraction: p.blank_fraction(),
        mass_one: p.mass_one(),
        n: p.n,
        mode: match condition.sampling {
            Sampling::WithReplacement => "wr".into(),
            Sampling::WithoutReplacement => "wor".into(),
        },
        cap: condition.cap,
        cost: match condition.cost {
            CostRule::Observed => "observed".into(),
            CostRule::RecountAddIn => "recount".into(),
        },
        alpha,
        mean_n: total as f64 / reps.len() as f64,
        reject_rate: rejected as f64 / reps.len() as f64,
        reps: reps.len() as u64,
        overflow: reps.iter().any(|r| r.capped),
    }
}

/// Runs every method on every condition, `reps` replications each. Rows come
/// out in condition-major, method-minor order.
pub fn run_experiment(
    conditions: &[Condition],
    methods: &[ComparatorSpec],
    reps: u64,
    seed: u64,
    alpha: f64,
) -> Result<Vec<ResultRow>> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be ≥ 1".into()));
    }
    let mut rows = Vec::with_capacity(conditions.len() * methods.len());
    for condition in conditions {
        condition.validate()?;
        let key = condition.key();
        let population = condition.population.materialize(&mut population_rng(seed, &condition.population.key()))?;
        let jobs: Vec<(usize, u64)> = (0..methods.len()).flat_map(|m| (0..reps).map(move |r| (m, r))).collect();
        let results: Vec<Replication> = jobs
            .into_par_iter()
            .map_init(
                || Scratch::new(&population),
                |scratch, (m, r)| {
                    let mut rng = replication_rng(seed, &key, r);
                    replicate(&methods[m], condition, alpha, &mut rng, scratch)
                },
            )
            .collect::<Result<_>>()?;
        for (m, chunk) in results.chunks(reps as usize).enumerate() {
            rows.push(aggregate(&methods[m], condition, alpha, chunk));
        }
    }
    Ok(rows)
}

/// Runs a single cell.
pub fn run_cell(spec: &ExperimentSpec) -> Result<ResultRow> {
    let mut rows = run_experiment(
        std::slice::from_ref(&spec.condition),
        std::slice::from_ref(&spec.method),
        spec.reps,
        spec.seed,
        spec.alpha,
    )?;
    Ok(rows.remove(0))
}

/// Writes rows as CSV with a header.
pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], writer: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(std::io::Error::other)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::martingale::EstimatorSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn wor(n: u64, theta: f64, cap: Option<u64>, cost: CostRule) -> Condition {
        Condition { population: PopulationSpec::binary(theta, n), sampling: Sampling::WithoutReplacement, cap, cost }
    }

    #[test]
    fn all_ones_rejects_at_the_fixed_point() {
        let method = ComparatorSpec::alpha(EstimatorSpec::Fixed { eta: 0.7 });
        let pop = vec![1.0; 100];
        let cond = wor(100, 1.0, None, CostRule::Observed);
        let r = run_replication(&method, &pop, &cond, 0.05, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // Without replacement the null mean falls, so this beats the 9 draws needed with replacement.
        assert!(r.rejected && r.sample_size <= 9);
    }

    #[test]
    fn recount_add_in_charges_full_population() {
        let method = ComparatorSpec::SprtWor { eta: 0.55 };
        let cond = wor(1000, 0.5, Some(10), CostRule::RecountAddIn);
        let pop = cond.population.materialize(&mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let r = run_replication(&method, &pop, &cond, 0.05, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(!r.rejected && r.capped);
        assert_eq!((r.sample_size, r.cost), (10, 1000));
    }

    #[test]
    fn scratch_is_restored() {
        let method = ComparatorSpec::SprtWor { eta: 0.6 };
        let cond = wor(50, 0.5, None, CostRule::Observed);
        let pop: Vec<f64> = (0..50).map(|i| (i % 2) as f64).collect();
        let mut scratch = Scratch::new(&pop);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            replicate(&method, &cond, 0.05, &mut rng, &mut scratch).unwrap();
            assert_eq!(scratch.values, pop);
        }
    }

    #[test]
    fn single_rep_cell_equals_the_replication() {
        let method = ComparatorSpec::SprtWor { eta: 0.7 };
        let cond = wor(200, 0.7, None, CostRule::Observed);
        let spec = ExperimentSpec { method: method.clone(), condition: cond, reps: 1, seed: 5, alpha: 0.05 };
        let row = run_cell(&spec).unwrap();
        let pop = cond.population.materialize(&mut population_rng(5, &cond.population.key())).unwrap();
        let r = run_replication(&method, &pop, &cond, 0.05, &mut replication_rng(5, &cond.key(), 0)).unwrap();
        assert_eq!(row.mean_n, r.cost as f64);
        assert_eq!(row.reject_rate, if r.rejected { 1.0 } else { 0.0 });
    }

    #[test]
    fn invalid_conditions() {
        let mut c = wor(10, 0.5, Some(11), CostRule::Observed);
        assert!(c.validate().is_err());
        c.sampling = Sampling::WithReplacement;
        c.cap = None;
        assert!(c.validate().is_err());
        assert!(run_experiment(&[wor(10, 0.5, None, CostRule::Observed)], &[], 0, 1, 0.05).is_err());
    }
}
