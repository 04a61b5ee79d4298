use serde::Serialize;

use super::{build_candidate_pool, rank_order, strip_eos, DecodeMode, DecoderConfig, Hypothesis, ScoreCache};
use crate::backend::{LanguageModel, TokenId, TopN};
use crate::constraint::{Constraint, SatisfactionScorer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BeamState {
    /// At most `beam_width` unfinished hypotheses.
    pub live: Vec<Hypothesis>,
    /// Hypotheses that emitted eos; never extended or re-scored.
    pub finished_pool: Vec<Hypothesis>,
    pub step: usize,
}

impl BeamState {
    pub fn initial() -> Self {
        Self {
            live: vec![Hypothesis::root()],
            finished_pool: Vec::new(),
            step: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub text: String,
    pub base_logprob: f64,
    pub r: Option<f64>,
    pub combined: f64,
}

/// One line of the decode trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepTrace {
    pub step: usize,
    /// Candidates considered across all live hypotheses.
    pub pool_size: usize,
    pub scorer_calls: usize,
    /// The live beam after this step.
    pub beam: Vec<TraceEntry>,
    /// Live hypotheses that were extended; not serialized.
    #[serde(skip)]
    pub live_before: usize,
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub best: Hypothesis,
    pub text: String,
    pub trace: Vec<StepTrace>,
    pub scorer_calls: usize,
}

/// Beam search over `log p(y | x) + lambda * R(y, C)`.
///
/// Each live hypothesis proposes its top `pool_factor * k` next tokens plus
/// the keyword tokens; all extensions are ranked together and the best `k`
/// unfinished ones survive. Extensions ending in eos move to the finished
/// pool when they rank ahead of the last surviving live extension.
pub struct BeamSearch<'a> {
    backend: &'a dyn LanguageModel,
    config: &'a DecoderConfig,
    prompt: Vec<TokenId>,
    cache: ScoreCache<'a>,
}

impl<'a> BeamSearch<'a> {
    pub fn new(
        prompt: &'a [TokenId],
        constraint: &'a Constraint,
        config: &'a DecoderConfig,
        backend: &'a dyn LanguageModel,
        scorer: &'a dyn SatisfactionScorer,
    ) -> Self {
        Self {
            backend,
            config,
            prompt: prompt.to_vec(),
            cache: ScoreCache::new(scorer, backend, constraint, prompt, config.memoize),
        }
    }

    pub fn scorer_calls(&self) -> usize {
        self.cache.calls()
    }

    fn context(&self, tokens: &[TokenId]) -> Vec<TokenId> {
        let mut ctx = Vec::with_capacity(1 + self.prompt.len() + tokens.len());
        ctx.push(self.backend.bos_id());
        ctx.extend_from_slice(&self.prompt);
        ctx.extend_from_slice(tokens);
        ctx
    }

    /// Advances the beam by one token.
    pub fn step(&mut self, state: BeamState) -> Result<(BeamState, StepTrace)> {
        let step = state.step;
        self.extend(state).map_err(|e| Error::Step {
            step,
            source: Box::new(e),
        })
    }

    fn extend(&mut self, mut state: BeamState) -> Result<(BeamState, StepTrace)> {
        if state.live.is_empty() {
            return Err(Error::InvalidConfig("beam has no live hypotheses".into()));
        }
        if state.step >= self.config.max_len {
            return Err(Error::InvalidConfig("beam already at max_len".into()));
        }
        let eos = self.backend.eos_id();
        let pool_size = self.config.pool_size();
        let calls_before = self.cache.calls();

        let mut extensions: Vec<Hypothesis> = Vec::new();
        let mut considered = 0;
        for hyp in &state.live {
            let ctx = self.context(&hyp.tokens);
            let dist = self.backend.next_token_logprobs(&ctx, TopN::N(pool_size))?;
            let pool = build_candidate_pool(&dist, pool_size, &self.config.keyword_tokens);
            considered += pool.len();
            for t in pool {
                let lp = match dist.logprob_of(t) {
                    Some(lp) => lp,
                    None => self.backend.token_logprob(&ctx, t)?,
                };
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let mut tokens = hyp.tokens.clone();
                tokens.push(t);
                let base = hyp.base_logprob + lp;
                extensions.push(Hypothesis {
                    finished: t == eos,
                    tokens,
                    base_logprob: base,
                    satisfaction: None,
                    combined: base,
                });
            }
        }

        if self.config.lambda != 0.0 {
            let prefixes: Vec<Vec<TokenId>> = extensions
                .iter()
                .map(|h| strip_eos(&h.tokens, eos).to_vec())
                .collect();
            let scores = self.cache.score_all(&prefixes)?;
            for (h, s) in extensions.iter_mut().zip(scores) {
                h.satisfaction = Some(s);
                h.combined = h.base_logprob + self.config.lambda * s.value;
            }
        }

        extensions.sort_by(rank_order);
        let live_before = state.live.len();
        let mut live = Vec::with_capacity(self.config.beam_width);
        for h in extensions {
            if live.len() == self.config.beam_width {
                break;
            }
            if h.finished {
                state.finished_pool.push(h);
            } else {
                live.push(h);
            }
        }

        let trace = StepTrace {
            step: state.step,
            pool_size: considered,
            scorer_calls: self.cache.calls() - calls_before,
            beam: live
                .iter()
                .map(|h| TraceEntry {
                    text: self.backend.detokenize(&h.tokens),
                    base_logprob: h.base_logprob,
                    r: h.r(),
                    combined: h.combined,
                })
                .collect(),
            live_before,
        };
        state.live = live;
        state.step += 1;
        Ok((state, trace))
    }

    /// Steps until every hypothesis has finished or `max_len` is reached,
    /// then returns the best finished hypothesis. Falls back to the best live
    /// one (with `finished = false`) when nothing finished.
    pub fn run(mut self) -> Result<DecodeOutput> {
        let mut state = BeamState::initial();
        let mut trace = Vec::new();
        while !state.live.is_empty() && state.step < self.config.max_len {
            let (next, t) = self.step(state)?;
            state = next;
            trace.push(t);
        }
        let pick = |pool: &[Hypothesis]| pool.iter().min_by(|a, b| rank_order(a, b)).cloned();
        let best = pick(&state.finished_pool)
            .or_else(|| pick(&state.live))
            .ok_or(Error::DegenerateDistribution)?;
        let text = self
            .backend
            .detokenize(strip_eos(&best.tokens, self.backend.eos_id()));
        Ok(DecodeOutput {
            best,
            text,
            trace,
            scorer_calls: self.cache.calls(),
        })
    }
}

/// Beam-mode decode of `prompt` under `constraint`.
pub fn decode(
    prompt: &str,
    constraint: &Constraint,
    config: &DecoderConfig,
    backend: &dyn LanguageModel,
    scorer: &dyn SatisfactionScorer,
) -> Result<DecodeOutput> {
    config.validate()?;
    if config.mode != DecodeMode::Beam {
        return Err(Error::InvalidConfig("decode requires mode = beam".into()));
    }
    let prompt_ids = backend.tokenize(prompt);
    BeamSearch::new(&prompt_ids, constraint, config, backend, scorer).run()
}
