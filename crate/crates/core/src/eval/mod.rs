//! Evaluation procedures: satisfaction ranking benchmarks, text metrics and
//! lambda sweeps.

mod metrics;
mod ranking;
mod sweep;

pub use metrics::{
    aggregate_toxicity_scores, concept_present, coverage, distinct_n, distinct_n_tokens,
    substring_recall, toxicity_aggregate, LexiconToxicity, MatchMode, ToxicityScorer,
};
pub use ranking::{
    build_prefix_pairs, load_pairs, parse_pairs, prefix_pair, ranking_accuracy, PairKind,
    PairRecord, RankingPair,
};
pub use sweep::{lambda_sweep, SweepMetric, SweepRow, SweepTask};

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Aggregated metric value with per-item details.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub value: f64,
    /// Number of items that contributed to `value`.
    pub support: usize,
    #[serde(default)]
    pub details: Vec<Value>,
}

impl MetricReport {
    pub fn new(name: impl Into<String>, value: f64, support: usize, details: Vec<Value>) -> Self {
        Self {
            name: name.into(),
            value,
            support,
            details,
        }
    }

    /// Mean of `values`; an empty slice gives value 0 with support 0.
    pub fn mean(name: impl Into<String>, values: &[f64], details: Vec<Value>) -> Self {
        let value = if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        Self::new(name, value, values.len(), details)
    }

    pub fn in_range(&self, lo: f64, hi: f64) -> bool {
        self.support >= 1 && self.value >= lo && self.value <= hi
    }
}
