//! Verbalized constraints and future-satisfaction scoring.
//!
//! A constraint is rendered as natural-language text `C`. Its satisfaction by
//! an output prefix `y` is estimated with a language model either as the
//! length-normalized likelihood of `C` following `y` and a separator token,
//! or as the normalized probability of answering "Yes" to a claim/document
//! question.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::{log_add_exp, LanguageModel, TokenId, TopN};
use crate::error::{Error, Result};

pub const KEYWORDS_TEMPLATE: &str = "This will be a sentence with these concepts: ";
pub const TOXICITY_TEXT: &str = "This will be a rude, disrespectful, or unreasonable comment.";
pub const YES_ANSWER: &str = " Yes";
pub const NO_ANSWER: &str = " No";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Keywords,
    Toxicity,
    Evidence,
    Claims,
    Custom,
}

impl ConstraintKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintKind::Keywords => "keywords",
            ConstraintKind::Toxicity => "toxicity",
            ConstraintKind::Evidence => "evidence",
            ConstraintKind::Claims => "claims",
            ConstraintKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for ConstraintKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "keywords" => ConstraintKind::Keywords,
            "toxicity" => ConstraintKind::Toxicity,
            "evidence" => ConstraintKind::Evidence,
            "claims" => ConstraintKind::Claims,
            "custom" => ConstraintKind::Custom,
            _ => return Err(Error::PayloadMismatch("unknown")),
        })
    }
}

/// Kind-specific constraint data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Keywords(Vec<String>),
    Toxicity,
    Evidence(Vec<String>),
    Claims(Vec<String>),
    Custom(String),
}

impl Payload {
    pub fn kind(&self) -> ConstraintKind {
        match self {
            Payload::Keywords(_) => ConstraintKind::Keywords,
            Payload::Toxicity => ConstraintKind::Toxicity,
            Payload::Evidence(_) => ConstraintKind::Evidence,
            Payload::Claims(_) => ConstraintKind::Claims,
            Payload::Custom(_) => ConstraintKind::Custom,
        }
    }

    /// Parses the `constraint_payload` field of a JSONL record. Keywords,
    /// evidence and claims take a list of strings (a single string is
    /// accepted too); toxicity ignores the payload; custom takes a string.
    pub fn from_json(kind: ConstraintKind, payload: &Value) -> Result<Self> {
        let strings = |v: &Value| -> Result<Vec<String>> {
            match v {
                Value::String(s) => Ok(vec![s.clone()]),
                Value::Array(items) => items
                    .iter()
                    .map(|i| {
                        i.as_str()
                            .map(str::to_string)
                            .ok_or(Error::PayloadMismatch(kind.as_str()))
                    })
                    .collect(),
                Value::Null => Ok(Vec::new()),
                _ => Err(Error::PayloadMismatch(kind.as_str())),
            }
        };
        Ok(match kind {
            ConstraintKind::Keywords => Payload::Keywords(strings(payload)?),
            ConstraintKind::Toxicity => Payload::Toxicity,
            ConstraintKind::Evidence => Payload::Evidence(strings(payload)?),
            ConstraintKind::Claims => Payload::Claims(strings(payload)?),
            ConstraintKind::Custom => match payload {
                Value::String(s) => Payload::Custom(s.clone()),
                _ => return Err(Error::PayloadMismatch(kind.as_str())),
            },
        })
    }

    pub fn to_json(&self) -> Value {
        match self {
            Payload::Keywords(v) | Payload::Evidence(v) | Payload::Claims(v) => {
                Value::from(v.clone())
            }
            Payload::Toxicity => Value::Null,
            Payload::Custom(s) => Value::from(s.clone()),
        }
    }

    /// Natural-language rendering of the constraint.
    pub fn verbalize(&self) -> Result<String> {
        let text = match self {
            Payload::Keywords(k) => {
                if k.is_empty() {
                    return Err(Error::EmptyPayload);
                }
                format!("{KEYWORDS_TEMPLATE}{}", k.join(" "))
            }
            Payload::Toxicity => TOXICITY_TEXT.to_string(),
            Payload::Evidence(docs) | Payload::Claims(docs) => docs.join("\n\n"),
            Payload::Custom(s) => s.clone(),
        };
        if text.trim().is_empty() {
            return Err(Error::EmptyPayload);
        }
        Ok(text)
    }
}

/// A verbalized constraint tokenized under its scoring backend.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub payload: Payload,
    pub verbalized: String,
    pub tokens: Vec<TokenId>,
    /// Token count under the scoring backend's tokenizer; the normalizer of
    /// the likelihood score.
    pub token_count: usize,
}

impl Constraint {
    pub fn kind(&self) -> ConstraintKind {
        self.payload.kind()
    }

    pub fn keywords(&self) -> &[String] {
        match &self.payload {
            Payload::Keywords(k) => k,
            _ => &[],
        }
    }
}

/// Verbalizes `payload` and counts its tokens with `backend`.
pub fn verbalize(payload: Payload, backend: &dyn LanguageModel) -> Result<Constraint> {
    let verbalized = payload.verbalize()?;
    let tokens = backend.tokenize(&verbalized);
    let token_count = backend.count_tokens(&verbalized)?;
    if token_count == 0 {
        return Err(Error::ZeroTokenConstraint);
    }
    Ok(Constraint {
        payload,
        verbalized,
        tokens,
        token_count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    Likelihood,
    Binary,
}

/// Estimated future constraint satisfaction, in natural-log units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatisfactionScore {
    pub value: f64,
    pub mode: ScoreMode,
}

/// Likelihood score: log-probability of the constraint tokens after
/// `[bos] ++ prefix ++ [eos]`, divided by the constraint's token count.
pub fn score_likelihood(
    prefix: &[TokenId],
    constraint: &Constraint,
    backend: &dyn LanguageModel,
) -> Result<SatisfactionScore> {
    if constraint.token_count == 0 {
        return Err(Error::ZeroTokenConstraint);
    }
    let context = separated_context(prefix, backend);
    let s = backend.score_continuation(&context, &constraint.tokens)?;
    Ok(SatisfactionScore {
        value: s.total_logprob / constraint.token_count as f64,
        mode: ScoreMode::Likelihood,
    })
}

fn separated_context(prefix: &[TokenId], backend: &dyn LanguageModel) -> Vec<TokenId> {
    let mut context = Vec::with_capacity(prefix.len() + 2);
    context.push(backend.bos_id());
    context.extend_from_slice(prefix);
    context.push(backend.eos_id());
    context
}

/// Claim/document question whose next-token Yes/No split gives the binary
/// score.
pub fn build_binary_prompt(claim: &str, document: &str) -> String {
    format!(
        "Claim:{claim}\n\nDocument:{document}\n\nQuestion: Is the above claim supported by the above document? Answer with Yes or No.\n\nAnswer:"
    )
}

/// Yes/No answer log-probabilities after a prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryProbe {
    pub prompt: String,
    pub yes_logprob: f64,
    pub no_logprob: f64,
}

impl BinaryProbe {
    /// `ln(pYes) - ln(pYes + pNo)`. Rejects probes where both answers have
    /// zero probability or either logprob is NaN or positive.
    pub fn score(&self) -> Result<SatisfactionScore> {
        let ok = |lp: f64| !lp.is_nan() && lp <= 0.0;
        if !ok(self.yes_logprob) || !ok(self.no_logprob) {
            return Err(Error::DegenerateProbe);
        }
        let norm = log_add_exp(self.yes_logprob, self.no_logprob);
        if norm == f64::NEG_INFINITY {
            return Err(Error::DegenerateProbe);
        }
        Ok(SatisfactionScore {
            value: self.yes_logprob - norm,
            mode: ScoreMode::Binary,
        })
    }
}

/// Looks up the Yes and No answer tokens in the next-token distribution
/// after `prompt`. Answers missing from the distribution have probability 0.
pub fn probe_binary(prompt: &str, backend: &dyn LanguageModel) -> Result<BinaryProbe> {
    let context = backend.encode_with_bos(prompt);
    let dist = backend.next_token_logprobs(&context, TopN::All)?;
    let lookup = |answer: &str| {
        backend
            .tokenize(answer)
            .first()
            .and_then(|&id| dist.logprob_of(id))
            .unwrap_or(f64::NEG_INFINITY)
    };
    Ok(BinaryProbe {
        prompt: prompt.to_string(),
        yes_logprob: lookup(YES_ANSWER),
        no_logprob: lookup(NO_ANSWER),
    })
}

pub fn score_binary(prompt: &str, backend: &dyn LanguageModel) -> Result<SatisfactionScore> {
    probe_binary(prompt, backend)?.score()
}

/// The prefix being scored: the prompt and the generated output, as ids of
/// `model`.
#[derive(Clone, Copy)]
pub struct Prefix<'a> {
    pub prompt: &'a [TokenId],
    pub output: &'a [TokenId],
    pub model: &'a dyn LanguageModel,
}

/// Estimates `R(y, C)` for the decoder.
pub trait SatisfactionScorer: Send + Sync {
    fn mode(&self) -> ScoreMode;

    fn score(&self, prefix: Prefix<'_>, constraint: &Constraint) -> Result<SatisfactionScore>;

    /// Verbalizes a payload under the tokenizer this scorer normalizes by.
    /// `model` is the decoding model, used when the scorer has none of its
    /// own.
    fn prepare(&self, payload: Payload, model: &dyn LanguageModel) -> Result<Constraint> {
        verbalize(payload, model)
    }

    /// Scores several outputs sharing one prompt; results keep input order.
    fn score_many(
        &self,
        prompt: &[TokenId],
        outputs: &[Vec<TokenId>],
        model: &dyn LanguageModel,
        constraint: &Constraint,
    ) -> Result<Vec<SatisfactionScore>> {
        outputs
            .iter()
            .map(|o| {
                self.score(
                    Prefix {
                        prompt,
                        output: o,
                        model,
                    },
                    constraint,
                )
            })
            .collect()
    }
}

/// Which ids a scorer receives relative to its own backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IdSpace {
    /// The decoding model is the scoring backend.
    Shared,
    /// Prefixes are detokenized with the decoding model and re-tokenized.
    Retokenize,
}

/// Likelihood-mode scorer over a backend.
#[derive(Clone)]
pub struct LikelihoodScorer {
    backend: Arc<dyn LanguageModel>,
    include_prompt: bool,
    ids: IdSpace,
}

impl LikelihoodScorer {
    /// Scorer whose backend is also the decoding model.
    pub fn new(backend: Arc<dyn LanguageModel>) -> Self {
        Self {
            backend,
            include_prompt: false,
            ids: IdSpace::Shared,
        }
    }

    /// Scorer backed by a different model than the decoder.
    pub fn separate(backend: Arc<dyn LanguageModel>) -> Self {
        Self {
            ids: IdSpace::Retokenize,
            ..Self::new(backend)
        }
    }

    /// Condition the constraint on the prompt as well as the output.
    pub fn include_prompt(mut self, yes: bool) -> Self {
        self.include_prompt = yes;
        self
    }

    pub fn backend(&self) -> &Arc<dyn LanguageModel> {
        &self.backend
    }

    fn prefix_ids(&self, prefix: Prefix<'_>) -> Vec<TokenId> {
        match self.ids {
            IdSpace::Shared => {
                let mut ids = Vec::new();
                if self.include_prompt {
                    ids.extend_from_slice(prefix.prompt);
                }
                ids.extend_from_slice(prefix.output);
                ids
            }
            IdSpace::Retokenize => self.backend.tokenize(&prefix_text(prefix, self.include_prompt)),
        }
    }
}

fn prefix_text(prefix: Prefix<'_>, include_prompt: bool) -> String {
    let output = prefix.model.detokenize(prefix.output);
    if include_prompt && !prefix.prompt.is_empty() {
        format!("{} {output}", prefix.model.detokenize(prefix.prompt))
    } else {
        output
    }
}

impl SatisfactionScorer for LikelihoodScorer {
    fn mode(&self) -> ScoreMode {
        ScoreMode::Likelihood
    }

    fn score(&self, prefix: Prefix<'_>, constraint: &Constraint) -> Result<SatisfactionScore> {
        score_likelihood(&self.prefix_ids(prefix), constraint, self.backend.as_ref())
    }

    fn prepare(&self, payload: Payload, _model: &dyn LanguageModel) -> Result<Constraint> {
        verbalize(payload, self.backend.as_ref())
    }

    fn score_many(
        &self,
        prompt: &[TokenId],
        outputs: &[Vec<TokenId>],
        model: &dyn LanguageModel,
        constraint: &Constraint,
    ) -> Result<Vec<SatisfactionScore>> {
        if constraint.token_count == 0 {
            return Err(Error::ZeroTokenConstraint);
        }
        let requests: Vec<_> = outputs
            .iter()
            .map(|o| crate::backend::ScoreRequest {
                context: separated_context(
                    &self.prefix_ids(Prefix {
                        prompt,
                        output: o,
                        model,
                    }),
                    self.backend.as_ref(),
                ),
                continuation: constraint.tokens.clone(),
            })
            .collect();
        Ok(self
            .backend
            .score_batch(&requests)?
            .into_iter()
            .map(|s| SatisfactionScore {
                value: s.total_logprob / constraint.token_count as f64,
                mode: ScoreMode::Likelihood,
            })
            .collect())
    }
}

/// Binary-mode scorer: the output is the claim, the verbalized constraint
/// the document.
#[derive(Clone)]
pub struct BinaryScorer {
    backend: Arc<dyn LanguageModel>,
    include_prompt: bool,
}

impl BinaryScorer {
    pub fn new(backend: Arc<dyn LanguageModel>) -> Self {
        Self {
            backend,
            include_prompt: false,
        }
    }

    pub fn include_prompt(mut self, yes: bool) -> Self {
        self.include_prompt = yes;
        self
    }
}

impl SatisfactionScorer for BinaryScorer {
    fn mode(&self) -> ScoreMode {
        ScoreMode::Binary
    }

    fn score(&self, prefix: Prefix<'_>, constraint: &Constraint) -> Result<SatisfactionScore> {
        let claim = prefix_text(prefix, self.include_prompt);
        let prompt = build_binary_prompt(&claim, &constraint.verbalized);
        score_binary(&prompt, self.backend.as_ref())
    }

    fn prepare(&self, payload: Payload, _model: &dyn LanguageModel) -> Result<Constraint> {
        verbalize(payload, self.backend.as_ref())
    }
}

/// Scorer backed by a closure over the output ids; used for oracles.
pub struct FnScorer<F> {
    f: F,
    mode: ScoreMode,
}

impl<F> FnScorer<F>
where
    F: Fn(&[TokenId]) -> f64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self {
            f,
            mode: ScoreMode::Likelihood,
        }
    }
}

impl<F> SatisfactionScorer for FnScorer<F>
where
    F: Fn(&[TokenId]) -> f64 + Send + Sync,
{
    fn mode(&self) -> ScoreMode {
        self.mode
    }

    fn score(&self, prefix: Prefix<'_>, _constraint: &Constraint) -> Result<SatisfactionScore> {
        Ok(SatisfactionScore {
            value: (self.f)(prefix.output),
            mode: self.mode,
        })
    }
}
