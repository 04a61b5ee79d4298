//! Language-model backends.
//!
//! Every backend answers two questions about a token context: what the
//! next-token distribution looks like, and how likely a given continuation
//! is. All scores are natural logarithms.

mod ngram;
mod remote;
mod table;
mod vocab;

pub use ngram::NgramModel;
pub use remote::{RemoteBackend, BACKEND_URL_ENV};
pub use table::TableModel;
pub use vocab::{Token, TokenId, Vocabulary, BOS_SURFACE, EOS_SURFACE, UNK_SURFACE};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// How many entries to request from [`LanguageModel::next_token_logprobs`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopN {
    All,
    N(usize),
}

impl TopN {
    pub fn limit(self, len: usize) -> usize {
        match self {
            TopN::All => len,
            TopN::N(n) => n.min(len),
        }
    }
}

/// Next-token log-probabilities, sorted by logprob descending and then by
/// ascending token id.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    entries: Vec<(TokenId, f64)>,
    context_len: usize,
}

impl TokenDistribution {
    /// Sorts `entries` into canonical order.
    pub fn new(mut entries: Vec<(TokenId, f64)>, context_len: usize) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self {
            entries,
            context_len,
        }
    }

    pub fn entries(&self) -> &[(TokenId, f64)] {
        &self.entries
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn logprob_of(&self, id: TokenId) -> Option<f64> {
        self.entries.iter().find(|(t, _)| *t == id).map(|(_, lp)| *lp)
    }

    pub fn truncate(&mut self, n: usize) {
        self.entries.truncate(n);
    }

    /// Total probability mass carried by the entries.
    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|(_, lp)| lp.exp()).sum()
    }
}

/// Log-likelihood of a continuation given a context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub total_logprob: f64,
    pub token_count: usize,
}

impl SequenceScore {
    pub const EMPTY: SequenceScore = SequenceScore {
        total_logprob: 0.0,
        token_count: 0,
    };
}

/// One (context, continuation) pair for batch scoring.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScoreRequest {
    pub context: Vec<TokenId>,
    pub continuation: Vec<TokenId>,
}

/// An autoregressive language model.
///
/// Implementations must be safe to share across threads; scoring calls take
/// `&self` and carry no per-request mutable state.
pub trait LanguageModel: Send + Sync {
    fn bos_id(&self) -> TokenId;

    /// End-of-sequence id; also used as the separator between a prefix and
    /// a constraint when scoring.
    fn eos_id(&self) -> TokenId;

    fn tokenize(&self, text: &str) -> Vec<TokenId>;

    fn surface(&self, id: TokenId) -> String;

    /// Joins token surfaces back into text.
    fn detokenize(&self, ids: &[TokenId]) -> String;

    /// Number of tokens `text` occupies under this model's tokenizer.
    fn count_tokens(&self, text: &str) -> Result<usize> {
        Ok(self.tokenize(text).len())
    }

    fn next_token_logprobs(&self, context: &[TokenId], top_n: TopN) -> Result<TokenDistribution>;

    fn score_continuation(
        &self,
        context: &[TokenId],
        continuation: &[TokenId],
    ) -> Result<SequenceScore>;

    /// Scores many pairs; results keep input order.
    fn score_batch(&self, items: &[ScoreRequest]) -> Result<Vec<SequenceScore>> {
        items
            .iter()
            .map(|r| self.score_continuation(&r.context, &r.continuation))
            .collect()
    }

    /// Log-probability of a single next token.
    fn token_logprob(&self, context: &[TokenId], token: TokenId) -> Result<f64> {
        Ok(self.score_continuation(context, &[token])?.total_logprob)
    }

    /// `[bos] ++ tokenize(text)`.
    fn encode_with_bos(&self, text: &str) -> Vec<TokenId> {
        let mut ids = vec![self.bos_id()];
        ids.extend(self.tokenize(text));
        ids
    }
}

pub(crate) fn check_context(context: &[TokenId], bos: TokenId) -> Result<()> {
    match context.first() {
        Some(&t) if t == bos => Ok(()),
        _ => Err(Error::InvalidContext(
            "context must begin with the bos token".into(),
        )),
    }
}

/// Log-sum-exp of two natural-log values.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
