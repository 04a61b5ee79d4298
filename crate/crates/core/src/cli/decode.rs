use std::collections::HashSet;
use std::fmt::Write as _;

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{emit, load_config, read_text, round6, round_floats, thread_pool, DecodeArgs};
use crate::backend::LanguageModel;
use crate::constraint::{ConstraintKind, Payload, SatisfactionScorer};
use crate::decoder::{decode, keyword_token_set, sample_reweighted, DecodeMode, DecoderConfig};

/// One line of a task file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: String,
    #[serde(default)]
    pub prompt: String,
    pub constraint_kind: ConstraintKind,
    #[serde(default)]
    pub constraint_payload: Value,
    /// Short answers, claims or concepts used by the metrics.
    #[serde(default)]
    pub references: Vec<String>,
}

impl TaskRecord {
    pub fn payload(&self) -> crate::Result<Payload> {
        Payload::from_json(self.constraint_kind, &self.constraint_payload)
    }
}

/// A parsed input line, or the reason it could not be used.
enum Line {
    Task(TaskRecord),
    Bad { line: usize, error: String },
}

fn parse_tasks(text: &str) -> Vec<Line> {
    let mut seen = HashSet::new();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match serde_json::from_str::<TaskRecord>(l) {
            Ok(t) if !seen.insert(t.id.clone()) => Line::Bad {
                line: i + 1,
                error: format!("duplicate id {:?}", t.id),
            },
            Ok(t) => Line::Task(t),
            Err(e) => Line::Bad {
                line: i + 1,
                error: e.to_string(),
            },
        })
        .collect()
}

struct Decoded {
    line: Value,
    trace: Vec<Value>,
}

fn decode_task(
    task: &TaskRecord,
    base: &DecoderConfig,
    augment: bool,
    backend: &dyn LanguageModel,
    scorer: &dyn SatisfactionScorer,
) -> crate::Result<Decoded> {
    let payload = task.payload()?;
    let mut cfg = base.clone();
    if let (true, Payload::Keywords(k)) = (augment, &payload) {
        cfg.keyword_tokens.extend(keyword_token_set(k, backend));
    }
    let constraint = scorer.prepare(payload, backend)?;
    match cfg.mode {
        DecodeMode::Beam => {
            let out = decode(&task.prompt, &constraint, &cfg, backend, scorer)?;
            let line = json!({
                "id": task.id,
                "output": out.text,
                "base_logprob": round6(out.best.base_logprob),
                "r": out.best.r().map_or(Value::Null, round6),
                "combined": round6(out.best.combined),
                "finished": out.best.finished,
                "scorer_calls": out.scorer_calls,
            });
            let trace = out
                .trace
                .iter()
                .map(|s| {
                    let mut m = Map::new();
                    m.insert("id".into(), json!(task.id));
                    if let Value::Object(o) = serde_json::to_value(s).expect("trace serializes") {
                        m.extend(o);
                    }
                    round_floats(Value::Object(m))
                })
                .collect();
            Ok(Decoded { line, trace })
        }
        DecodeMode::Sample => {
            let out = sample_reweighted(&task.prompt, &constraint, &cfg, backend, scorer)?;
            let first = out.generations.first();
            let line = json!({
                "id": task.id,
                "output": first.map(|g| g.text.clone()),
                "base_logprob": first.map_or(Value::Null, |g| round6(g.base_logprob)),
                "r": Value::Null,
                "combined": Value::Null,
                "finished": first.is_some_and(|g| g.finished),
                "scorer_calls": out.scorer_calls,
                "samples": out.generations.iter().map(|g| g.text.as_str()).collect::<Vec<_>>(),
            });
            Ok(Decoded {
                line,
                trace: Vec::new(),
            })
        }
    }
}

/// Decodes a task file. Writes one JSON line per input line, in input
/// order; lines that fail become error objects. Returns exit code 0, or 2
/// when any line failed.
pub fn run_decode(args: &DecodeArgs) -> anyhow::Result<u8> {
    let mut cfg = load_config(&args.shared)?;
    if let Some(out) = &args.shared.out {
        cfg.output_path = Some(out.clone());
    }
    cfg.validate()?;
    let input = read_text(&args.input, "input")?;
    let backend = cfg.build_backend()?;
    let scorer = cfg.build_scorer(&backend)?;
    let dcfg = cfg.decoder_config();
    let augment = cfg.decoder.keyword_augmentation;

    let lines = parse_tasks(&input);
    let pool = thread_pool(args.shared.jobs)?;
    let results: Vec<Result<Decoded, Value>> = pool.install(|| {
        lines
            .par_iter()
            .map(|l| match l {
                Line::Task(t) => decode_task(t, &dcfg, augment, backend.as_ref(), scorer.as_ref())
                    .map_err(|e| json!({"id": t.id, "error": e.to_string()})),
                Line::Bad { line, error } => Err(json!({"id": null, "line": line, "error": error})),
            })
            .collect()
    });

    let mut out = String::new();
    let mut trace = String::new();
    let mut failed = false;
    for r in &results {
        let line = match r {
            Ok(d) => {
                for t in &d.trace {
                    writeln!(trace, "{t}").unwrap();
                }
                &d.line
            }
            Err(e) => {
                failed = true;
                e
            }
        };
        writeln!(out, "{line}").unwrap();
    }
    emit(cfg.output_path.as_deref(), &out)?;
    if let Some(p) = &args.trace {
        std::fs::write(p, trace).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(if failed { 2 } else { 0 })
}
