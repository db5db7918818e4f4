#![allow(dead_code)]

use std::collections::BTreeMap;

use rla_core::assorters::{CardInterpretation, Vote};
use rla_core::Sampling;
use rla_service::{AssertionConfig, AssorterSpec, Interpretation, Interpretations, SessionConfig};

pub fn plurality(id: &str, eta0: f64) -> AssertionConfig {
    AssertionConfig {
        id: id.to_string(),
        assorter: AssorterSpec::Plurality { winner: "Alice".into(), loser: format!("{id}-loser") },
        eta0,
        test: None,
    }
}

pub fn config(assertions: Vec<AssertionConfig>, population: u64, sampling: Sampling, seed: u64) -> SessionConfig {
    SessionConfig {
        session_id: None,
        seed,
        population: Some(population),
        sampling,
        alpha: 0.05,
        assertions,
        batches: None,
        compliance_attested: false,
    }
}

pub fn votes(seq: u64, entries: &[(&str, Vote)]) -> Interpretations {
    Interpretations::One(Interpretation {
        seq,
        entries: entries
            .iter()
            .map(|(id, vote)| (id.to_string(), CardInterpretation::Vote { vote: *vote }))
            .collect::<BTreeMap<_, _>>(),
    })
}

pub fn values(seq: u64, entries: &[(&str, f64)]) -> Interpretations {
    Interpretations::One(Interpretation {
        seq,
        entries: entries
            .iter()
            .map(|(id, value)| (id.to_string(), CardInterpretation::Value { value: *value }))
            .collect(),
    })
}
