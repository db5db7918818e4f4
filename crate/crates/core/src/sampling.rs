//! Reproducible streams of card selections.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::martingale::Sampling;
use crate::{Error, Result};

/// Deterministic sequence of card indices in `0..n` derived from a seed.
///
/// Without replacement this is a lazily generated uniform permutation
/// (Fisher–Yates with the swapped-out slots kept in a map), so memory grows
/// with the number of draws rather than with `n`.
#[derive(Debug, Clone)]
pub struct SelectionStream {
    rng: ChaCha8Rng,
    n: u64,
    sampling: Sampling,
    drawn: u64,
    swaps: HashMap<u64, u64>,
}

impl SelectionStream {
    pub fn new(seed: u64, n: u64, sampling: Sampling) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("population must have at least one card".into()));
        }
        Ok(Self { rng: ChaCha8Rng::seed_from_u64(seed), n, sampling, drawn: 0, swaps: HashMap::new() })
    }

    /// Stream positioned after `drawn` selections, as if they had been taken.
    pub fn resume(seed: u64, n: u64, sampling: Sampling, drawn: u64) -> Result<Self> {
        let mut s = Self::new(seed, n, sampling)?;
        for _ in 0..drawn {
            s.next_index()?;
        }
        Ok(s)
    }

    pub fn drawn(&self) -> u64 {
        self.drawn
    }

    pub fn population(&self) -> u64 {
        self.n
    }

    pub fn next_index(&mut self) -> Result<u64> {
        match self.sampling {
            Sampling::WithReplacement => {
                self.drawn += 1;
                Ok(self.rng.random_range(0..self.n))
            }
            Sampling::WithoutReplacement => {
                if self.drawn >= self.n {
                    return Err(Error::Exhausted);
                }
                let i = self.drawn;
                let j = self.rng.random_range(i..self.n);
                let at_j = *self.swaps.get(&j).unwrap_or(&j);
                let at_i = *self.swaps.get(&i).unwrap_or(&i);
                self.swaps.insert(j, at_i);
                self.swaps.remove(&i);
                self.drawn += 1;
                Ok(at_j)
            }
        }
    }
}

/// Deterministic sequence of unit positions chosen with chance proportional
/// to fixed weights, e.g. batch sizes. Without replacement the chances are
/// renormalised over the units not yet chosen.
#[derive(Debug, Clone)]
pub struct WeightedSelectionStream {
    rng: ChaCha8Rng,
    weights: Vec<f64>,
    remaining: Vec<usize>,
    sampling: Sampling,
    drawn: u64,
}

impl WeightedSelectionStream {
    pub fn new(seed: u64, weights: Vec<f64>, sampling: Sampling) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig("weights must be positive and finite".into()));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            remaining: (0..weights.len()).collect(),
            weights,
            sampling,
            drawn: 0,
        })
    }

    pub fn drawn(&self) -> u64 {
        self.drawn
    }

    pub fn next_index(&mut self) -> Result<usize> {
        if self.remaining.is_empty() {
            return Err(Error::Exhausted);
        }
        let total: f64 = self.remaining.iter().map(|&k| self.weights[k]).sum();
        let target = self.rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pos = self.remaining.len() - 1;
        for (i, &k) in self.remaining.iter().enumerate() {
            acc += self.weights[k];
            if target < acc {
                pos = i;
                break;
            }
        }
        let k = self.remaining[pos];
        if self.sampling == Sampling::WithoutReplacement {
            self.remaining.remove(pos);
        }
        self.drawn += 1;
        Ok(k)
    }
}
