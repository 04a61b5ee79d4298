//! HTTP client for a remote scoring server.
//!
//! Wire protocol (JSON over HTTP, natural-log probabilities):
//!
//! ```text
//! POST /v1/next_logprobs  {"context": str, "top_n": int}
//!                      -> {"tokens": [str], "logprobs": [float]}
//! POST /v1/score          {"context": str, "continuation": str}
//!                      -> {"total_logprob": float, "token_count": int}
//! POST /v1/score_batch    {"items": [{"context", "continuation"}]}
//!                      -> {"results": [{"total_logprob", "token_count"}]}
//! ```
//!
//! The server owns tokenization. Locally, text is split into pieces that
//! carry their leading whitespace (`" snow"`), and every surface seen is
//! interned to a stable id so the decoder can work on ids.

use std::collections::HashMap;
use std::sync::RwLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    check_context, LanguageModel, ScoreRequest, SequenceScore, TokenDistribution, TokenId, TopN,
};
use crate::backend::vocab::{BOS_SURFACE, EOS_SURFACE, UNK_SURFACE};
use crate::error::{Error, Result};

pub const BACKEND_URL_ENV: &str = "BACKEND_URL";

#[derive(Debug, Default)]
struct Interner {
    ids: HashMap<String, TokenId>,
    surfaces: Vec<String>,
}

impl Interner {
    fn with_specials(specials: &[&str]) -> Self {
        let mut i = Self::default();
        for s in specials {
            i.intern(s);
        }
        i
    }

    fn intern(&mut self, s: &str) -> TokenId {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        let id = self.surfaces.len() as TokenId;
        self.ids.insert(s.to_string(), id);
        self.surfaces.push(s.to_string());
        id
    }
}

#[derive(Serialize)]
struct NextLogprobsRequest<'a> {
    context: &'a str,
    top_n: usize,
}

#[derive(Deserialize)]
struct NextLogprobsResponse {
    tokens: Vec<String>,
    logprobs: Vec<f64>,
}

#[derive(Serialize)]
struct ScoreBody {
    context: String,
    continuation: String,
}

#[derive(Serialize)]
struct ScoreBatchBody {
    items: Vec<ScoreBody>,
}

#[derive(Deserialize)]
struct ScoreBatchResponse {
    results: Vec<SequenceScore>,
}

/// Client for a remote model server.
pub struct RemoteBackend {
    base_url: String,
    agent: ureq::Agent,
    interner: RwLock<Interner>,
    max_top_n: usize,
}

impl RemoteBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(60))
            .build();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
            interner: RwLock::new(Interner::with_specials(&[
                BOS_SURFACE,
                EOS_SURFACE,
                UNK_SURFACE,
            ])),
            max_top_n: 1000,
        }
    }

    /// Reads the base url from `BACKEND_URL`.
    pub fn from_env() -> Option<Self> {
        std::env::var(BACKEND_URL_ENV).ok().map(Self::new)
    }

    /// Cap sent as `top_n` when every token is requested.
    pub fn with_max_top_n(mut self, n: usize) -> Self {
        self.max_top_n = n;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R> {
        let url = format!("{}{}", self.base_url, path);
        let resp = self.agent.post(&url).send_json(body).map_err(|e| match e {
            ureq::Error::Status(code, r) => Error::Protocol(format!(
                "{url} returned {code}: {}",
                r.into_string().unwrap_or_default()
            )),
            ureq::Error::Transport(t) => Error::BackendUnreachable(format!("{url}: {t}")),
        })?;
        resp.into_json::<R>()
            .map_err(|e| Error::Protocol(format!("{url}: bad response body: {e}")))
    }

    fn intern(&self, s: &str) -> TokenId {
        if let Some(&id) = self.interner.read().unwrap().ids.get(s) {
            return id;
        }
        self.interner.write().unwrap().intern(s)
    }

    /// Context text without the leading bos.
    fn context_text(&self, context: &[TokenId]) -> String {
        self.detokenize(&context[1..])
    }

    fn check_score(&self, s: SequenceScore) -> Result<SequenceScore> {
        if s.total_logprob.is_nan() || s.total_logprob > 1e-9 {
            return Err(Error::Protocol(format!(
                "invalid total_logprob {}",
                s.total_logprob
            )));
        }
        Ok(s)
    }
}

/// Splits text into pieces that keep their leading whitespace.
pub(crate) fn split_pieces(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_word {
                pieces.push(&text[start..i]);
                start = i;
                in_word = false;
            }
        } else {
            in_word = true;
        }
    }
    if in_word {
        pieces.push(&text[start..]);
    }
    pieces
}

impl LanguageModel for RemoteBackend {
    fn bos_id(&self) -> TokenId {
        0
    }

    fn eos_id(&self) -> TokenId {
        1
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        split_pieces(text).into_iter().map(|p| self.intern(p)).collect()
    }

    fn surface(&self, id: TokenId) -> String {
        self.interner
            .read()
            .unwrap()
            .surfaces
            .get(id as usize)
            .cloned()
            .unwrap_or_else(|| UNK_SURFACE.to_string())
    }

    fn detokenize(&self, ids: &[TokenId]) -> String {
        let interner = self.interner.read().unwrap();
        ids.iter()
            .filter(|&&id| id != 0)
            .map(|&id| {
                interner
                    .surfaces
                    .get(id as usize)
                    .map(String::as_str)
                    .unwrap_or(UNK_SURFACE)
            })
            .collect()
    }

    fn count_tokens(&self, text: &str) -> Result<usize> {
        let s: SequenceScore = self.post(
            "/v1/score",
            &ScoreBody {
                context: String::new(),
                continuation: text.to_string(),
            },
        )?;
        Ok(s.token_count)
    }

    fn next_token_logprobs(&self, context: &[TokenId], top_n: TopN) -> Result<TokenDistribution> {
        check_context(context, self.bos_id())?;
        let text = self.context_text(context);
        let resp: NextLogprobsResponse = self.post(
            "/v1/next_logprobs",
            &NextLogprobsRequest {
                context: &text,
                top_n: top_n.limit(self.max_top_n),
            },
        )?;
        if resp.tokens.len() != resp.logprobs.len() {
            return Err(Error::Protocol(
                "tokens and logprobs differ in length".into(),
            ));
        }
        if let Some(bad) = resp.logprobs.iter().find(|lp| lp.is_nan() || **lp > 1e-9) {
            return Err(Error::Protocol(format!("invalid logprob {bad}")));
        }
        let entries = resp
            .tokens
            .iter()
            .zip(&resp.logprobs)
            .map(|(t, &lp)| (self.intern(t), lp.min(0.0)))
            .collect();
        Ok(TokenDistribution::new(entries, context.len()))
    }

    fn score_continuation(
        &self,
        context: &[TokenId],
        continuation: &[TokenId],
    ) -> Result<SequenceScore> {
        check_context(context, self.bos_id())?;
        if continuation.is_empty() {
            return Ok(SequenceScore::EMPTY);
        }
        let s = self.post(
            "/v1/score",
            &ScoreBody {
                context: self.context_text(context),
                continuation: self.detokenize(continuation),
            },
        )?;
        self.check_score(s)
    }

    fn score_batch(&self, items: &[ScoreRequest]) -> Result<Vec<SequenceScore>> {
        for r in items {
            check_context(&r.context, self.bos_id())?;
        }
        let body = ScoreBatchBody {
            items: items
                .iter()
                .map(|r| ScoreBody {
                    context: self.context_text(&r.context),
                    continuation: self.detokenize(&r.continuation),
                })
                .collect(),
        };
        let resp: ScoreBatchResponse = self.post("/v1/score_batch", &body)?;
        if resp.results.len() != items.len() {
            return Err(Error::Protocol(format!(
                "score_batch returned {} results for {} items",
                resp.results.len(),
                items.len()
            )));
        }
        resp.results
            .into_iter()
            .zip(items)
            .map(|(s, r)| {
                if r.continuation.is_empty() {
                    Ok(SequenceScore::EMPTY)
                } else {
                    self.check_score(s)
                }
            })
            .collect()
    }
}
