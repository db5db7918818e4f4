//! Synthetic populations of assorter values in `[0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Probability mass at zero in comparison-audit mixtures.
pub const MIX_MASS_ZERO: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PopulationKind {
    /// A fraction `theta` of ones, the rest zeros.
    Binary { theta: f64 },
    /// A fraction `blanks` of one-halves; among the rest, a fraction `theta` of ones.
    Blanks { theta: f64, blanks: f64 },
    /// Mass 0.001 at zero, `mass_one` at one, the remainder uniform on `[0, 1]`.
    ComparisonMix { mass_one: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub kind: PopulationKind,
    pub n: u64,
}

/// `round(n·mass)` with ties going up.
pub fn round_half_up(n: u64, mass: f64) -> u64 {
    // The small offset keeps values like 0.505·10⁴ = 5049.999… from rounding down.
    (n as f64 * mass + 0.5 + 1e-9).floor() as u64
}

impl PopulationSpec {
    pub fn binary(theta: f64, n: u64) -> Self {
        Self { kind: PopulationKind::Binary { theta }, n }
    }

    pub fn blanks(theta: f64, blanks: f64, n: u64) -> Self {
        Self { kind: PopulationKind::Blanks { theta, blanks }, n }
    }

    pub fn comparison_mix(mass_one: f64, n: u64) -> Self {
        Self { kind: PopulationKind::ComparisonMix { mass_one }, n }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("population size must be ≥ 1".into()));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be in [0, 1], got {v}")))
            }
        };
        match self.kind {
            PopulationKind::Binary { theta } => unit("theta", theta),
            PopulationKind::Blanks { theta, blanks } => {
                unit("theta", theta)?;
                unit("blank fraction", blanks)
            }
            PopulationKind::ComparisonMix { mass_one } => unit("mass at one", mass_one),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PopulationKind::Binary { .. } => "binary",
            PopulationKind::Blanks { .. } => "blanks",
            PopulationKind::ComparisonMix { .. } => "compmix",
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match self.kind {
            PopulationKind::Binary { theta } | PopulationKind::Blanks { theta, .. } => Some(theta),
            PopulationKind::ComparisonMix { .. } => None,
        }
    }

    pub fn blank_fraction(&self) -> Option<f64> {
        match self.kind {
            PopulationKind::Blanks { blanks, .. } => Some(blanks),
            _ => None,
        }
    }

    pub fn mass_one(&self) -> Option<f64> {
        match self.kind {
            PopulationKind::ComparisonMix { mass_one } => Some(mass_one),
            _ => None,
        }
    }

    /// Stable identifier used for seeding.
    pub fn key(&self) -> String {
        match self.kind {
            PopulationKind::Binary { theta } => format!("binary:{theta}:{}", self.n),
            PopulationKind::Blanks { theta, blanks } => format!("blanks:{theta}:{blanks}:{}", self.n),
            PopulationKind::ComparisonMix { mass_one } => format!("compmix:{mass_one}:{}", self.n),
        }
    }

    /// Builds the population: point masses get exact rounded counts, any
    /// remainder of a mixture is drawn uniformly from `rng`.
    pub fn materialize<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        let n = self.n;
        let mut values = Vec::with_capacity(n as usize);
        match self.kind {
            PopulationKind::Binary { theta } => {
                let ones = round_half_up(n, theta);
                push(&mut values, 1.0, ones);
                push(&mut values, 0.0, n - ones);
            }
            PopulationKind::Blanks { theta, blanks } => {
                let half = round_half_up(n, blanks);
                let valid = n - half;
                let ones = round_half_up(valid, theta);
                push(&mut values, 1.0, ones);
                push(&mut values, 0.5, half);
                push(&mut values, 0.0, valid - ones);
            }
            PopulationKind::ComparisonMix { mass_one } => {
                let zeros = round_half_up(n, MIX_MASS_ZERO);
                let ones = round_half_up(n, mass_one);
                if zeros + ones > n {
                    return Err(Error::InfeasibleCounts { needed: zeros + ones, available: n });
                }
                push(&mut values, 0.0, zeros);
                push(&mut values, 1.0, ones);
                for _ in 0..n - zeros - ones {
                    values.push(rng.random::<f64>());
                }
            }
        }
        Ok(values)
    }
}

fn push(values: &mut Vec<f64>, x: f64, count: u64) {
    values.extend(std::iter::repeat_n(x, count as usize));
}
