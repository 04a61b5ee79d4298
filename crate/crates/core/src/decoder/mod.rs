//! Constraint-guided decoding.
//!
//! Candidates are ranked by `log p(y | x) + lambda * R(y, C)`, where `R` is a
//! future-satisfaction estimate from a [`SatisfactionScorer`]. Beam mode
//! searches deterministically; sample mode reweights the top-k next-token
//! logits and samples with nucleus truncation.

mod beam;
mod sample;

pub use beam::{decode, BeamSearch, BeamState, DecodeOutput, StepTrace, TraceEntry};
pub use sample::{nucleus, sample_reweighted, Generation, ReweightedSampler, SampleOutput};

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::backend::{LanguageModel, TokenDistribution, TokenId, UNK_SURFACE};
use crate::constraint::{Constraint, SatisfactionScore, SatisfactionScorer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Beam,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub top_k_reweight: usize,
    pub nucleus_p: f64,
    pub max_new_tokens: usize,
    pub num_samples: usize,
    pub rng_seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            top_k_reweight: 50,
            nucleus_p: 0.9,
            max_new_tokens: 20,
            num_samples: 25,
            rng_seed: 0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "nucleus_p must be in (0, 1], got {}",
                self.nucleus_p
            )));
        }
        if self.top_k_reweight == 0 {
            return Err(Error::InvalidConfig("top_k_reweight must be >= 1".into()));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::InvalidConfig("max_new_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    /// Weight of the satisfaction term; 0 disables scoring entirely.
    pub lambda: f64,
    pub beam_width: usize,
    /// Each live hypothesis considers its top `pool_factor * beam_width`
    /// next tokens.
    pub pool_factor: usize,
    /// Tokens always added to the candidate pool.
    pub keyword_tokens: BTreeSet<TokenId>,
    pub max_len: usize,
    pub mode: DecodeMode,
    pub sampling: SamplingConfig,
    /// Score each distinct prefix once per decode call.
    pub memoize: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            beam_width: 5,
            pool_factor: 2,
            keyword_tokens: BTreeSet::new(),
            max_len: 20,
            mode: DecodeMode::Beam,
            sampling: SamplingConfig::default(),
            memoize: true,
        }
    }
}

impl DecoderConfig {
    pub fn pool_size(&self) -> usize {
        self.pool_factor * self.beam_width
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.beam_width == 0 {
            return Err(Error::InvalidConfig("beam_width must be >= 1".into()));
        }
        if self.pool_factor == 0 {
            return Err(Error::InvalidConfig("pool_factor must be >= 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::InvalidConfig("max_len must be >= 1".into()));
        }
        if self.mode == DecodeMode::Sample {
            self.sampling.validate()?;
        }
        Ok(())
    }
}

/// A partial or finished output sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    /// Unnormalized cumulative `log p(y | x)`.
    pub base_logprob: f64,
    /// `None` when lambda is 0 and no score was computed.
    pub satisfaction: Option<SatisfactionScore>,
    pub combined: f64,
    pub finished: bool,
}

impl Hypothesis {
    pub fn root() -> Self {
        Self {
            tokens: Vec::new(),
            base_logprob: 0.0,
            satisfaction: None,
            combined: 0.0,
            finished: false,
        }
    }

    /// Tokens without a trailing eos.
    pub fn content(&self, eos: TokenId) -> &[TokenId] {
        strip_eos(&self.tokens, eos)
    }

    pub fn r(&self) -> Option<f64> {
        self.satisfaction.map(|s| s.value)
    }
}

pub(crate) fn strip_eos(tokens: &[TokenId], eos: TokenId) -> &[TokenId] {
    match tokens.split_last() {
        Some((&last, rest)) if last == eos => rest,
        _ => tokens,
    }
}

/// Ranking order: combined desc, base desc, shorter first, then
/// lexicographic token ids.
pub fn rank_order(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.combined
        .total_cmp(&a.combined)
        .then(b.base_logprob.total_cmp(&a.base_logprob))
        .then(a.tokens.len().cmp(&b.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Token ids of every keyword, tokenized bare and with a leading space.
pub fn keyword_token_set<S: AsRef<str>>(
    keywords: &[S],
    backend: &dyn LanguageModel,
) -> BTreeSet<TokenId> {
    keywords
        .iter()
        .flat_map(|k| {
            let k = k.as_ref();
            let mut ids = backend.tokenize(k);
            ids.extend(backend.tokenize(&format!(" {k}")));
            ids
        })
        .filter(|&id| id != backend.bos_id() && backend.surface(id) != UNK_SURFACE)
        .collect()
}

/// The top `pool_size` tokens of `dist`, then any keyword tokens not already
/// present, in ascending id order.
pub fn build_candidate_pool(
    dist: &TokenDistribution,
    pool_size: usize,
    keyword_tokens: &BTreeSet<TokenId>,
) -> Vec<TokenId> {
    let mut pool: Vec<TokenId> = dist
        .entries()
        .iter()
        .take(pool_size)
        .map(|&(t, _)| t)
        .collect();
    let extra: Vec<TokenId> = keyword_tokens
        .iter()
        .copied()
        .filter(|t| !pool.contains(t))
        .collect();
    pool.extend(extra);
    pool
}

/// Per-invocation memo of satisfaction scores keyed on the scored prefix.
pub(crate) struct ScoreCache<'a> {
    scorer: &'a dyn SatisfactionScorer,
    model: &'a dyn LanguageModel,
    constraint: &'a Constraint,
    prompt: &'a [TokenId],
    memo: Option<HashMap<Vec<TokenId>, SatisfactionScore>>,
    calls: usize,
}

impl<'a> ScoreCache<'a> {
    pub(crate) fn new(
        scorer: &'a dyn SatisfactionScorer,
        model: &'a dyn LanguageModel,
        constraint: &'a Constraint,
        prompt: &'a [TokenId],
        memoize: bool,
    ) -> Self {
        Self {
            scorer,
            model,
            constraint,
            prompt,
            memo: memoize.then(HashMap::new),
            calls: 0,
        }
    }

    pub(crate) fn calls(&self) -> usize {
        self.calls
    }

    /// Scores every prefix, calling the scorer once per memo miss. Misses are
    /// sent as one batch.
    pub(crate) fn score_all(&mut self, prefixes: &[Vec<TokenId>]) -> Result<Vec<SatisfactionScore>> {
        let mut misses: Vec<Vec<TokenId>> = Vec::new();
        let mut slots: Vec<Option<usize>> = Vec::with_capacity(prefixes.len());
        let mut pending: HashMap<&[TokenId], usize> = HashMap::new();
        for p in prefixes {
            match &self.memo {
                Some(memo) if memo.contains_key(p) => slots.push(None),
                Some(_) => {
                    let idx = *pending.entry(p.as_slice()).or_insert_with(|| {
                        misses.push(p.clone());
                        misses.len() - 1
                    });
                    slots.push(Some(idx));
                }
                None => {
                    misses.push(p.clone());
                    slots.push(Some(misses.len() - 1));
                }
            }
        }
        let fresh = if misses.is_empty() {
            Vec::new()
        } else {
            self.scorer
                .score_many(self.prompt, &misses, self.model, self.constraint)?
        };
        self.calls += misses.len();
        let out = prefixes
            .iter()
            .zip(&slots)
            .map(|(p, slot)| match slot {
                Some(i) => fresh[*i],
                None => self.memo.as_ref().unwrap()[p],
            })
            .collect();
        if let Some(memo) = &mut self.memo {
            for (p, s) in misses.into_iter().zip(fresh) {
                memo.insert(p, s);
            }
        }
        Ok(out)
    }
}
