use std::collections::HashMap;

use super::{check_context, LanguageModel, SequenceScore, TokenDistribution, TokenId, TopN, Vocabulary};
use crate::backend::vocab::UNK_SURFACE;
use crate::error::{Error, Result};

/// A model defined by explicit next-token tables.
///
/// Rows are keyed on the whole context after bos. Contexts without a row use
/// the default row, which starts out uniform. Tokens missing from a row have
/// probability zero.
#[derive(Debug, Clone)]
pub struct TableModel {
    vocab: Vocabulary,
    default_row: Vec<f64>,
    rows: HashMap<Vec<TokenId>, Vec<f64>>,
}

impl TableModel {
    pub fn new<I, W>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = W>,
        W: AsRef<str>,
    {
        let vocab = Vocabulary::new(words)?;
        let n = vocab.output_size();
        Ok(Self {
            default_row: vec![(1.0 / n as f64).ln(); vocab.len()],
            vocab,
            rows: HashMap::new(),
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn row(&self, probs: &[(&str, f64)]) -> Result<Vec<f64>> {
        let mut row = vec![f64::NEG_INFINITY; self.vocab.len()];
        let mut sum = 0.0;
        for &(w, p) in probs {
            let id = self
                .vocab
                .id(w)
                .filter(|&id| self.vocab.is_output(id))
                .ok_or_else(|| Error::InvalidParameter(format!("{w:?} is not an output token")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("probability {p} for {w:?}")));
            }
            row[id as usize] = p.ln();
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "row probabilities sum to {sum}"
            )));
        }
        Ok(row)
    }

    /// Sets the distribution after `context` (words following bos).
    pub fn with_row(mut self, context: &[&str], probs: &[(&str, f64)]) -> Result<Self> {
        let row = self.row(probs)?;
        let key = context.iter().map(|w| self.vocab.encode(w)[0]).collect();
        self.rows.insert(key, row);
        Ok(self)
    }

    pub fn with_default(mut self, probs: &[(&str, f64)]) -> Result<Self> {
        self.default_row = self.row(probs)?;
        Ok(self)
    }

    fn logprob(&self, context: &[TokenId], token: TokenId) -> f64 {
        if !self.vocab.is_output(token) {
            return f64::NEG_INFINITY;
        }
        let row = self.rows.get(&context[1..]).unwrap_or(&self.default_row);
        row[token as usize]
    }
}

impl LanguageModel for TableModel {
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
        let entries = self
            .vocab
            .output_ids()
            .map(|t| (t, self.logprob(context, t)))
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
            total += self.logprob(&seq, t);
            seq.push(t);
        }
        Ok(SequenceScore {
            total_logprob: total,
            token_count: continuation.len(),
        })
    }
}
