//! Geometric-mean-ratio scores across simulation conditions.

use serde::{Deserialize, Serialize};

use super::harness::ResultRow;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub params: String,
    /// `exp(mean_c ln(mean_n(method, c) / min_m mean_n(m, c)))`.
    pub score: f64,
    pub conditions: usize,
}

/// Scores every method by the geometric mean, over conditions, of its mean
/// sample size divided by the best mean sample size in that condition.
/// Methods appear in order of first occurrence.
pub fn geo_mean_ratio_summary(rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    let mut methods: Vec<(String, String)> = Vec::new();
    let mut conditions: Vec<String> = Vec::new();
    for r in rows {
        let m = (r.method.clone(), r.params.clone());
        if !methods.contains(&m) {
            methods.push(m);
        }
        let c = r.condition_label();
        if !conditions.contains(&c) {
            conditions.push(c);
        }
    }
    let lookup = |m: &(String, String), c: &str| {
        rows.iter()
            .find(|r| r.method == m.0 && r.params == m.1 && r.condition_label() == c)
            .map(|r| r.mean_n)
            .ok_or_else(|| Error::MissingCell { method: format!("{} {}", m.0, m.1), condition: c.to_string() })
    };
    let mut log_sums = vec![0.0; methods.len()];
    for c in &conditions {
        let means = methods.iter().map(|m| lookup(m, c)).collect::<Result<Vec<f64>>>()?;
        let best = means.iter().copied().fold(f64::INFINITY, f64::min);
        for (acc, mean) in log_sums.iter_mut().zip(&means) {
            *acc += (mean / best).ln();
        }
    }
    Ok(methods
        .into_iter()
        .zip(log_sums)
        .map(|((method, params), sum)| SummaryRow {
            method,
            params,
            score: (sum / conditions.len() as f64).exp(),
            conditions: conditions.len(),
        })
        .collect())
}
