//! Word-level n-gram model with add-constant smoothing.

use std::collections::{BTreeSet, HashMap};

use super::{check_context, LanguageModel, SequenceScore, TokenDistribution, TokenId, TopN, Vocabulary};
use crate::backend::vocab::{BOS_SURFACE, EOS_SURFACE, UNK_SURFACE};
use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
struct ContextCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

/// `P(t | ctx) = (count(ctx, t) + alpha) / (count(ctx) + alpha * |V|)` where
/// `|V|` is the output space (words plus eos) and `ctx` is the previous
/// `order - 1` tokens, left-padded with bos.
///
/// Immutable after fitting, so one model can be shared across threads.
#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    alpha: f64,
    vocab: Vocabulary,
    counts: HashMap<Vec<TokenId>, ContextCounts>,
}

impl NgramModel {
    /// Fits on whitespace-tokenized sentences; the vocabulary is every
    /// distinct word in the corpus, sorted.
    pub fn fit<S: AsRef<str>>(corpus: &[S], order: usize, alpha: f64) -> Result<Self> {
        let words: BTreeSet<&str> = corpus
            .iter()
            .flat_map(|s| s.as_ref().split_whitespace())
            .filter(|w| ![BOS_SURFACE, EOS_SURFACE, UNK_SURFACE].contains(w))
            .collect();
        Self::fit_with_vocab(corpus, words, order, alpha)
    }

    /// Fits with an explicit word list. Corpus words outside it become the
    /// unknown token and are never predicted.
    pub fn fit_with_vocab<S, I, W>(corpus: &[S], words: I, order: usize, alpha: f64) -> Result<Self>
    where
        S: AsRef<str>,
        I: IntoIterator<Item = W>,
        W: AsRef<str>,
    {
        if order < 1 {
            return Err(Error::InvalidParameter("order must be at least 1".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter("alpha must be positive".into()));
        }
        let vocab = Vocabulary::new(words)?;
        let mut counts: HashMap<Vec<TokenId>, ContextCounts> = HashMap::new();
        for sentence in corpus {
            let mut seq = vec![Vocabulary::BOS; order - 1];
            seq.extend(vocab.encode(sentence.as_ref()));
            seq.push(Vocabulary::EOS);
            for i in (order - 1)..seq.len() {
                let target = seq[i];
                if !vocab.is_output(target) {
                    continue;
                }
                let entry = counts.entry(seq[i + 1 - order..i].to_vec()).or_default();
                entry.total += 1;
                *entry.next.entry(target).or_default() += 1;
            }
        }
        Ok(Self {
            order,
            alpha,
            vocab,
            counts,
        })
    }

    /// A model that assigns equal probability to eos and every word.
    pub fn uniform<I, W>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = W>,
        W: AsRef<str>,
    {
        Self::fit_with_vocab::<&str, _, _>(&[], words, 1, 1.0)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// The last `order - 1` tokens of `context`, left-padded with bos.
    pub fn context_key(&self, context: &[TokenId]) -> Vec<TokenId> {
        let n = self.order - 1;
        let tail = &context[context.len().saturating_sub(n)..];
        let mut key = vec![Vocabulary::BOS; n - tail.len()];
        key.extend_from_slice(tail);
        key
    }

    /// Raw frequency of `token` after `key`, and of `key` itself.
    pub fn counts(&self, key: &[TokenId], token: TokenId) -> (u64, u64) {
        match self.counts.get(key) {
            Some(c) => (c.next.get(&token).copied().unwrap_or(0), c.total),
            None => (0, 0),
        }
    }

    /// Smoothed conditional log-probability for a context key of length
    /// `order - 1`. Tokens outside the output space get `-inf`.
    pub fn logprob_for_key(&self, key: &[TokenId], token: TokenId) -> f64 {
        if !self.vocab.is_output(token) {
            return f64::NEG_INFINITY;
        }
        let (c, total) = self.counts(key, token);
        let v = self.vocab.output_size() as f64;
        ((c as f64 + self.alpha) / (total as f64 + self.alpha * v)).ln()
    }
}

impl LanguageModel for NgramModel {
    fn bos_id(&self) -> TokenId {
        Vocabulary::BOS
    }

    fn eos_id(&self) -> TokenId {
        Vocabulary::EOS
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        self.vocab.encode(text)
    }

    fn surface(&self, id: TokenId) -> String {
        self.vocab.surface(id).unwrap_or(UNK_SURFACE).to_string()
    }

    fn detokenize(&self, ids: &[TokenId]) -> String {
        self.vocab.detokenize(ids)
    }

    fn next_token_logprobs(&self, context: &[TokenId], top_n: TopN) -> Result<TokenDistribution> {
        check_context(context, Vocabulary::BOS)?;
        let key = self.context_key(context);
        let entries = self
            .vocab
            .output_ids()
            .map(|t| (t, self.logprob_for_key(&key, t)))
            .collect();
        let mut dist = TokenDistribution::new(entries, context.len());
        dist.truncate(top_n.limit(self.vocab.output_size()));
        Ok(dist)
    }

    fn score_continuation(
        &self,
        context: &[TokenId],
        continuation: &[TokenId],
    ) -> Result<SequenceScore> {
        check_context(context, Vocabulary::BOS)?;
        let mut seq = context.to_vec();
        let mut total = 0.0;
        for &t in continuation {
            total += self.logprob_for_key(&self.context_key(&seq), t);
            seq.push(t);
        }
        Ok(SequenceScore {
            total_logprob: total,
            token_count: continuation.len(),
        })
    }

    fn token_logprob(&self, context: &[TokenId], token: TokenId) -> Result<f64> {
        check_context(context, Vocabulary::BOS)?;
        Ok(self.logprob_for_key(&self.context_key(context), token))
    }
}
