//! Assorters: maps from a card's interpretation to a bounded nonnegative number
//! whose population mean exceeds 1/2 exactly when an assertion holds.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How a card reads with respect to one winner/loser pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    Winner,
    Loser,
    /// A valid vote for some other candidate, or no vote in this contest.
    Other,
    /// Overvote or otherwise invalid.
    Invalid,
}

/// What an auditor records for one card and one assertion: either a vote,
/// or an already-assorted value for general assertions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CardInterpretation {
    Vote { vote: Vote },
    Value { value: f64 },
}

impl CardInterpretation {
    /// Assorter value, checked against `[0, upper]`.
    pub fn assort(&self, upper: f64) -> Result<f64> {
        let x = match *self {
            Self::Vote { vote } => plurality_assort(vote),
            Self::Value { value } => value,
        };
        if x >= 0.0 && x <= upper {
            Ok(x)
        } else {
            Err(Error::OutOfRange { value: x, low: 0.0, high: upper })
        }
    }
}

/// One for the reported winner, zero for the reported loser, one half otherwise.
pub fn plurality_assort(vote: Vote) -> f64 {
    match vote {
        Vote::Winner => 1.0,
        Vote::Loser => 0.0,
        Vote::Other | Vote::Invalid => 0.5,
    }
}

/// Reported counts for one winner/loser pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportedTallies {
    pub winner: u64,
    pub loser: u64,
    /// Cards in the population, including ones showing neither candidate.
    pub cards: u64,
}

impl ReportedTallies {
    pub fn validate(&self) -> Result<()> {
        if self.cards == 0 {
            return Err(Error::EmptyContest);
        }
        if self.winner + self.loser > self.cards {
            return Err(Error::InvalidConfig(format!(
                "winner {} + loser {} exceeds cards {}",
                self.winner, self.loser, self.cards
            )));
        }
        Ok(())
    }
}

/// Reported assorter mean, the usual anchor for polling audits:
/// `(w + (N − w − ℓ)/2)/N`.
pub fn polling_eta0(t: &ReportedTallies) -> Result<f64> {
    t.validate()?;
    let n = t.cards as f64;
    let neither = (t.cards - t.winner - t.loser) as f64;
    Ok((t.winner as f64 + neither / 2.0) / n)
}

/// Share of the winner among cards showing either candidate.
pub fn theta_prime(t: &ReportedTallies) -> Result<f64> {
    t.validate()?;
    let both = t.winner + t.loser;
    if both == 0 {
        return Err(Error::EmptyContest);
    }
    Ok(t.winner as f64 / both as f64)
}
