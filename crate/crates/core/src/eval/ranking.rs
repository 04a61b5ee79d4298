//! Satisfaction ranking benchmark.
//!
//! Each pair holds a sequence that satisfies a constraint and one that does
//! not. A scorer is credited when it ranks the positive above the negative.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::MetricReport;
use crate::backend::LanguageModel;
use crate::constraint::{ConstraintKind, Payload, Prefix, SatisfactionScorer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairKind {
    #[default]
    Sentence,
    Prefix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingPair {
    pub id: String,
    pub positive: String,
    pub negative: String,
    pub payload: Payload,
    pub pair_kind: PairKind,
}

impl RankingPair {
    pub fn new(
        id: impl Into<String>,
        positive: impl Into<String>,
        negative: impl Into<String>,
        payload: Payload,
        pair_kind: PairKind,
    ) -> Result<Self> {
        let pair = Self {
            id: id.into(),
            positive: positive.into(),
            negative: negative.into(),
            payload,
            pair_kind,
        };
        if pair.positive == pair.negative {
            return Err(Error::DegeneratePair(pair.id));
        }
        pair.payload.verbalize()?;
        Ok(pair)
    }
}

/// One line of a pairs file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    pub positive: String,
    pub negative: String,
    pub constraint_kind: ConstraintKind,
    #[serde(default)]
    pub constraint_payload: Value,
    #[serde(default)]
    pub pair_kind: PairKind,
}

impl TryFrom<PairRecord> for RankingPair {
    type Error = Error;

    fn try_from(r: PairRecord) -> Result<Self> {
        let payload = Payload::from_json(r.constraint_kind, &r.constraint_payload)?;
        RankingPair::new(r.id, r.positive, r.negative, payload, r.pair_kind)
    }
}

impl From<&RankingPair> for PairRecord {
    fn from(p: &RankingPair) -> Self {
        PairRecord {
            id: p.id.clone(),
            positive: p.positive.clone(),
            negative: p.negative.clone(),
            constraint_kind: p.payload.kind(),
            constraint_payload: p.payload.to_json(),
            pair_kind: p.pair_kind,
        }
    }
}

/// Parses JSONL pairs; blank lines are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<RankingPair>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let rec: PairRecord = serde_json::from_str(l).map_err(|e| {
                Error::InvalidParameter(format!("pairs line {}: {e}", i + 1))
            })?;
            RankingPair::try_from(rec)
        })
        .collect()
}

pub fn load_pairs(path: &Path) -> Result<Vec<RankingPair>> {
    parse_pairs(&std::fs::read_to_string(path)?)
}

/// Fraction of pairs where `R(positive) > R(negative)`. Pairs whose scores
/// differ by at most `epsilon` count as correct. Pairs the scorer fails on
/// are skipped and listed in the details.
pub fn ranking_accuracy(
    pairs: &[RankingPair],
    scorer: &dyn SatisfactionScorer,
    backend: &dyn LanguageModel,
    epsilon: f64,
) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("ranking pairs"));
    }
    let mut outcomes = Vec::new();
    let mut details = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let scored = (|| -> Result<(f64, f64)> {
            let constraint = scorer.prepare(pair.payload.clone(), backend)?;
            let r = |text: &str| -> Result<f64> {
                let output = backend.tokenize(text);
                Ok(scorer
                    .score(
                        Prefix {
                            prompt: &[],
                            output: &output,
                            model: backend,
                        },
                        &constraint,
                    )?
                    .value)
            };
            Ok((r(&pair.positive)?, r(&pair.negative)?))
        })();
        match scored {
            Ok((rp, rn)) => {
                let correct = rp > rn || rp == rn || (rp - rn).abs() <= epsilon;
                outcomes.push(if correct { 1.0 } else { 0.0 });
                details.push(json!({
                    "id": pair.id,
                    "r_positive": finite_or_null(rp),
                    "r_negative": finite_or_null(rn),
                    "correct": correct,
                }));
            }
            Err(e) => details.push(json!({"id": pair.id, "skipped": e.to_string()})),
        }
    }
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("every ranking pair was skipped"));
    }
    Ok(MetricReport::mean("ranking_accuracy", &outcomes, details))
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Prefix pair from a sentence pair: the positive keeps the first `split`
/// words of the positive sentence; the negative shares all but the last of
/// them and ends in `replacement`.
pub fn prefix_pair(pair: &RankingPair, split: usize, replacement: &str) -> Result<RankingPair> {
    let a: Vec<&str> = pair.positive.split_whitespace().collect();
    let b_len = pair.negative.split_whitespace().count();
    if split == 0 || split > a.len() || split > b_len {
        return Err(Error::SplitOutOfRange {
            id: pair.id.clone(),
            split,
        });
    }
    let positive = a[..split].join(" ");
    let mut neg: Vec<&str> = a[..split - 1].to_vec();
    neg.push(replacement);
    RankingPair::new(
        pair.id.clone(),
        positive,
        neg.join(" "),
        pair.payload.clone(),
        PairKind::Prefix,
    )
}

/// Builds prefix pairs, drawing each replacement word from the negative
/// sentence with a seeded rng. Words equal to the positive's last prefix
/// word are never drawn.
pub fn build_prefix_pairs(
    pairs: &[RankingPair],
    split_points: &[usize],
    seed: u64,
) -> Result<Vec<RankingPair>> {
    if pairs.len() != split_points.len() {
        return Err(Error::InvalidParameter(format!(
            "{} pairs but {} split points",
            pairs.len(),
            split_points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs
        .iter()
        .zip(split_points)
        .map(|(pair, &split)| {
            let a: Vec<&str> = pair.positive.split_whitespace().collect();
            if split == 0 || split > a.len() {
                return Err(Error::SplitOutOfRange {
                    id: pair.id.clone(),
                    split,
                });
            }
            let last = a[split - 1];
            let choices: Vec<&str> = pair
                .negative
                .split_whitespace()
                .filter(|w| *w != last)
                .collect();
            let word = choices
                .choose(&mut rng)
                .ok_or_else(|| Error::DegeneratePair(pair.id.clone()))?;
            prefix_pair(pair, split, word)
        })
        .collect()
}
