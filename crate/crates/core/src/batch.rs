//! Batch-level audits.
//!
//! Batches are sampled either with equal probability, which turns the batch
//! totals into an ordinary bounded population (see [`rescale_equal_prob`]), or
//! with probability proportional to an a priori bound on each batch total
//! (PPS). Under PPS the value fed to the test and its upper bound both depend
//! on which batches remain, so [`BatchDrawState`] recomputes them every draw.
//!
//! Manifests are CSV with a header row and the columns
//! `batch_id,cards,assorter_total,upper_bound`. `upper_bound` may be left
//! empty, in which case it defaults to `u·cards` for the assorter bound `u`.

use std::io::Read;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::martingale::{
    alpha_log_factor, apply, shrink_trunc_eta, EstimatorSpec, NextNull, Sampling, TestState, DEFAULT_EPS_FRACTION,
};
use crate::{Error, Result};

/// Relative tolerance used by [`check_commensurable`].
pub const COMMENSURABLE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub id: String,
    /// Number of cards `|B_k|`.
    pub cards: u64,
    /// Assorter total `A_k` over the batch's cards.
    pub total: f64,
    /// A priori bound `u_k ≥ A_k`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchCollection {
    batches: Vec<Batch>,
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    batch_id: String,
    cards: u64,
    assorter_total: f64,
    #[serde(default)]
    upper_bound: Option<f64>,
}

impl BatchCollection {
    pub fn new(batches: Vec<Batch>) -> Result<Self> {
        if batches.is_empty() {
            return Err(Error::Manifest("no batches".into()));
        }
        for b in &batches {
            if b.cards == 0 {
                return Err(Error::Manifest(format!("batch {} has no cards", b.id)));
            }
            if !(b.total >= 0.0 && b.total <= b.bound && b.bound.is_finite()) {
                return Err(Error::Manifest(format!(
                    "batch {}: need 0 ≤ total ({}) ≤ bound ({})",
                    b.id, b.total, b.bound
                )));
            }
        }
        let c = Self { batches };
        if !(c.total_bound() > 0.0) {
            return Err(Error::Manifest("sum of bounds must be positive".into()));
        }
        Ok(c)
    }

    /// Builds batches from `(cards, total)` pairs with the default bound `u·cards`.
    pub fn with_default_bounds(items: &[(u64, f64)], upper: f64) -> Result<Self> {
        let batches = items
            .iter()
            .enumerate()
            .map(|(i, &(cards, total))| Batch { id: i.to_string(), cards, total, bound: upper * cards as f64 })
            .collect();
        Self::new(batches)
    }

    /// Reads a CSV manifest; missing bounds default to `upper·cards`.
    pub fn from_manifest<R: Read>(reader: R, upper: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut batches = Vec::new();
        for row in rdr.deserialize::<ManifestRow>() {
            let row = row.map_err(|e| Error::Manifest(e.to_string()))?;
            batches.push(Batch {
                bound: row.upper_bound.unwrap_or(upper * row.cards as f64),
                id: row.batch_id,
                cards: row.cards,
                total: row.assorter_total,
            });
        }
        Self::new(batches)
    }

    pub fn batches(&self) -> &[Batch] {
        &self.batches
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// `D`, the number of cards.
    pub fn total_cards(&self) -> u64 {
        self.batches.iter().map(|b| b.cards).sum()
    }

    /// `U`, the sum of batch bounds.
    pub fn total_bound(&self) -> f64 {
        self.batches.iter().map(|b| b.bound).sum()
    }

    /// Per-card assorter mean.
    pub fn card_mean(&self) -> f64 {
        self.batches.iter().map(|b| b.total).sum::<f64>() / self.total_cards() as f64
    }
}

/// Equal-probability batch sampling: returns `Ã_k = A_k·K/D` and the bound
/// `ũ = max_k u_k·K/D`. The mean of the `Ã` equals the per-card mean.
pub fn rescale_equal_prob(batches: &BatchCollection) -> (Vec<f64>, f64) {
    let scale = batches.len() as f64 / batches.total_cards() as f64;
    let values = batches.batches.iter().map(|b| b.total * scale).collect();
    let bound = batches.batches.iter().map(|b| b.bound * scale).fold(0.0, f64::max);
    (values, bound)
}

/// Whether two assorters' bounds over the same batches are proportional.
pub fn check_commensurable(a: &[f64], b: &[f64]) -> bool {
    if a.is_empty() || a.len() != b.len() || a.iter().chain(b).any(|v| !(*v > 0.0)) {
        return false;
    }
    let r0 = a[0] / b[0];
    a.iter().zip(b).all(|(x, y)| ((x / y) - r0).abs() <= COMMENSURABLE_RTOL * r0.abs())
}

/// Result of one PPS selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpsDraw {
    /// Position of the batch in the collection.
    pub batch: usize,
    /// `Â = A_k·U/(u_k·D)` over the set the batch was drawn from.
    pub value: f64,
    /// `û = U/D` over the same set.
    pub bound: f64,
}

/// Sequential PPS batch audit of one assertion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchDrawState {
    collection: BatchCollection,
    sampling: Sampling,
    alpha: f64,
    mu0: f64,
    remaining: Vec<usize>,
    drawn_total: f64,
    remaining_bound: f64,
    remaining_cards: u64,
    pending: Option<PpsDraw>,
    test: TestState,
}

impl BatchDrawState {
    pub fn new(collection: BatchCollection, alpha: f64, mu0: f64, sampling: Sampling) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must be in (0, 1), got {alpha}")));
        }
        if !(mu0 >= 0.0) {
            return Err(Error::InvalidConfig(format!("null mean must be ≥ 0, got {mu0}")));
        }
        if collection.batches.iter().any(|b| !(b.bound > 0.0)) {
            return Err(Error::InvalidConfig("PPS sampling needs every bound > 0".into()));
        }
        let remaining = (0..collection.len()).collect();
        let mut s = Self {
            remaining_bound: collection.total_bound(),
            remaining_cards: collection.total_cards(),
            collection,
            sampling,
            alpha,
            mu0,
            remaining,
            drawn_total: 0.0,
            pending: None,
            test: TestState::fresh(mu0),
        };
        s.test.null_mean = s.batch_null_mean();
        Ok(s)
    }

    pub fn test(&self) -> &TestState {
        &self.test
    }

    pub fn collection(&self) -> &BatchCollection {
        &self.collection
    }

    /// Batches still available for selection.
    pub fn remaining(&self) -> &[usize] {
        &self.remaining
    }

    /// Current `û = U_ℓ/|D_ℓ|`.
    pub fn bound(&self) -> f64 {
        self.remaining_bound / self.remaining_cards as f64
    }

    /// Null mean of the remaining cards: `(D·μ₀ − Σ drawn A)/|D_ℓ|`, or `μ₀`
    /// with replacement.
    pub fn batch_null_mean(&self) -> f64 {
        match self.sampling {
            Sampling::WithReplacement => self.mu0,
            Sampling::WithoutReplacement => {
                let d = self.collection.total_cards() as f64;
                (d * self.mu0 - self.drawn_total) / self.remaining_cards as f64
            }
        }
    }

    /// Chance that batch `k` is chosen next.
    pub fn selection_probability(&self, k: usize) -> f64 {
        if self.remaining.contains(&k) {
            self.collection.batches[k].bound / self.remaining_bound
        } else {
            0.0
        }
    }

    /// Picks a remaining batch with chance proportional to its bound.
    pub fn select_pps<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        if self.remaining.is_empty() {
            return Err(Error::Exhausted);
        }
        let target = rng.random::<f64>() * self.remaining_bound;
        let mut acc = 0.0;
        for &k in &self.remaining {
            acc += self.collection.batches[k].bound;
            if target < acc {
                return Ok(k);
            }
        }
        Ok(*self.remaining.last().expect("nonempty"))
    }

    /// Records that batch `k` was drawn and returns its rescaled value,
    /// using the batch total stored in the collection. The draw must then be
    /// passed to [`Self::batch_alpha_step`].
    pub fn observe(&mut self, k: usize) -> Result<PpsDraw> {
        let total = self
            .collection
            .batches
            .get(k)
            .ok_or_else(|| Error::InvalidConfig(format!("batch {k} is not available")))?
            .total;
        self.observe_total(k, total)
    }

    /// As [`Self::observe`], but with the batch total supplied by the caller,
    /// as when it is only learned by auditing the batch.
    pub fn observe_total(&mut self, k: usize, total: f64) -> Result<PpsDraw> {
        if self.pending.is_some() {
            return Err(Error::PendingDraw);
        }
        if !self.test.is_running() {
            return Err(Error::StepAfterFinish(self.test.status));
        }
        let pos = self
            .remaining
            .iter()
            .position(|&r| r == k)
            .ok_or_else(|| Error::InvalidConfig(format!("batch {k} is not available")))?;
        let b = &self.collection.batches[k];
        if !(total >= 0.0 && total <= b.bound) {
            return Err(Error::OutOfRange { value: total, low: 0.0, high: b.bound });
        }
        let bound = self.bound();
        let value = (total * (self.remaining_bound / (b.bound * self.remaining_cards as f64))).min(bound);
        let draw = PpsDraw { batch: k, value, bound };
        if self.sampling == Sampling::WithoutReplacement {
            self.remaining.swap_remove(pos);
            self.drawn_total += total;
            self.remaining_cards -= b.cards;
            // Re-summed rather than decremented so the bound stays exact.
            self.remaining_bound = self.remaining.iter().map(|&r| self.collection.batches[r].bound).sum();
        }
        self.pending = Some(draw);
        Ok(draw)
    }

    /// Selects and observes one batch.
    pub fn pps_draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<PpsDraw> {
        if self.pending.is_some() {
            return Err(Error::PendingDraw);
        }
        let k = self.select_pps(rng)?;
        self.observe(k)
    }

    /// Multiplies `T` by the ALPHA factor with upper bound `û`, the estimate
    /// being clamped into `[μ, û − û·10⁻⁶]`.
    pub fn batch_alpha_step(&mut self, draw: &PpsDraw, est: &EstimatorSpec) -> Result<&TestState> {
        match self.pending {
            Some(p) if p == *draw => {}
            _ => return Err(Error::InvalidConfig("draw does not match the pending selection".into())),
        }
        let (x, u) = (draw.value, draw.bound);
        if !(x >= 0.0 && x <= u) {
            return Err(Error::OutOfRange { value: x, low: 0.0, high: u });
        }
        let mu = self.test.null_mean;
        let eta = clamp_eta(est, self.test.draws + 1, self.test.sum, mu, u);
        let log_factor = alpha_log_factor(x, eta, mu, u);

        let null = if self.sampling == Sampling::WithoutReplacement && self.remaining.is_empty() {
            let d = self.collection.total_cards() as f64;
            NextNull::Exhausted { impossible: self.drawn_total > d * self.mu0 }
        } else {
            NextNull::Mean(self.batch_null_mean())
        };
        self.test.draws += 1;
        self.test.sum += x;
        apply(&mut self.test, log_factor, null, -self.alpha.ln());
        self.pending = None;
        Ok(&self.test)
    }
}

fn clamp_eta(est: &EstimatorSpec, j: u64, sum: f64, mu: f64, u: f64) -> Option<f64> {
    let eps = u * DEFAULT_EPS_FRACTION;
    let ceiling = u - eps;
    if mu >= ceiling {
        return None;
    }
    let raw = match *est {
        EstimatorSpec::Fixed { eta } => eta,
        EstimatorSpec::ShrinkTrunc(mut p) => {
            p.eps_u = eps;
            shrink_trunc_eta(j, sum, &p, mu, u).ok()?
        }
        EstimatorSpec::FromLambda { lambda } => {
            if mu <= 0.0 {
                0.0
            } else {
                mu * (1.0 + lambda.min(1.0 / mu) * (u - mu))
            }
        }
    };
    Some(raw.max(mu).min(ceiling))
}
