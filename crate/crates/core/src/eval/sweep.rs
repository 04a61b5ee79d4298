use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::{coverage, distinct_n, substring_recall, MatchMode, MetricReport};
use crate::backend::LanguageModel;
use crate::constraint::{Payload, SatisfactionScorer};
use crate::decoder::{decode, keyword_token_set, DecoderConfig};
use crate::error::Result;

/// One prompt to decode, with the references its metrics need.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTask {
    pub id: String,
    pub prompt: String,
    pub payload: Payload,
    /// Concepts for coverage, short answers for recall. Coverage falls back
    /// to the keyword payload when empty.
    pub references: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMetric {
    Coverage(MatchMode),
    SubstringRecall,
    DistinctN(usize),
}

impl SweepMetric {
    pub fn name(&self) -> String {
        match self {
            SweepMetric::Coverage(_) => "coverage".into(),
            SweepMetric::SubstringRecall => "substring_recall".into(),
            SweepMetric::DistinctN(n) => format!("distinct_{n}"),
        }
    }

    fn evaluate(&self, task: &SweepTask, output: &str) -> Result<f64> {
        match self {
            SweepMetric::Coverage(mode) => {
                let concepts = match (&task.payload, task.references.is_empty()) {
                    (Payload::Keywords(k), true) => k.as_slice(),
                    _ => task.references.as_slice(),
                };
                coverage(output, concepts, *mode)
            }
            SweepMetric::SubstringRecall => substring_recall(output, &task.references),
            SweepMetric::DistinctN(n) => distinct_n(output, *n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub outputs: Vec<Option<String>>,
    pub reports: Vec<MetricReport>,
    /// Decode failures, one object per failed task.
    pub failures: Vec<Value>,
}

/// Decodes every task at every lambda in `grid` and averages each metric
/// per row. Keyword payloads add their tokens to the candidate pool.
pub fn lambda_sweep(
    dataset: &[SweepTask],
    grid: &[f64],
    config: &DecoderConfig,
    backend: &dyn LanguageModel,
    scorer: &dyn SatisfactionScorer,
    metrics: &[SweepMetric],
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(crate::Error::EmptyInput("lambda grid"));
    }
    grid.iter()
        .map(|&lambda| {
            let mut cfg = config.clone();
            cfg.lambda = lambda;
            let outputs: Vec<Result<String>> = dataset
                .par_iter()
                .map(|task| {
                    let constraint = scorer.prepare(task.payload.clone(), backend)?;
                    let mut task_cfg = cfg.clone();
                    if let Payload::Keywords(k) = &task.payload {
                        task_cfg.keyword_tokens.extend(keyword_token_set(k, backend));
                    }
                    Ok(decode(&task.prompt, &constraint, &task_cfg, backend, scorer)?.text)
                })
                .collect();
            let failures = dataset
                .iter()
                .zip(&outputs)
                .filter_map(|(t, o)| {
                    o.as_ref()
                        .err()
                        .map(|e| json!({"id": t.id, "error": e.to_string()}))
                })
                .collect();
            let reports = metrics
                .iter()
                .map(|m| {
                    let mut values = Vec::new();
                    let mut details = Vec::new();
                    for (task, out) in dataset.iter().zip(&outputs) {
                        let Ok(out) = out else { continue };
                        match m.evaluate(task, out) {
                            Ok(v) => {
                                values.push(v);
                                details.push(json!({"id": task.id, "value": v}));
                            }
                            Err(e) => details.push(json!({"id": task.id, "skipped": e.to_string()})),
                        }
                    }
                    MetricReport::mean(m.name(), &values, details)
                })
                .collect();
            Ok(SweepRow {
                lambda,
                outputs: outputs.into_iter().map(Result::ok).collect(),
                reports,
                failures,
            })
        })
        .collect()
}
