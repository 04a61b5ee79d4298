//! Reweighted nucleus sampling.
//!
//! Each step keeps the top `top_k_reweight` next tokens, adds
//! `lambda * R(y ++ [t], C)` to their logprobs, renormalizes, truncates to
//! the nucleus of the adjusted distribution and samples. Tokens outside the
//! top-k set have probability zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{strip_eos, DecodeMode, DecoderConfig, ScoreCache};
use crate::backend::{LanguageModel, TokenId, TopN};
use crate::constraint::{Constraint, SatisfactionScorer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub tokens: Vec<TokenId>,
    pub text: String,
    pub base_logprob: f64,
    /// Ended with eos rather than at `max_new_tokens`.
    pub finished: bool,
}

#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub generations: Vec<Generation>,
    pub scorer_calls: usize,
}

/// Smallest prefix of `probs` (sorted by probability descending, ties by
/// id) whose mass reaches `p`, renormalized.
pub fn nucleus(probs: &[(TokenId, f64)], p: f64) -> Vec<(TokenId, f64)> {
    let mut sorted = probs.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut mass = 0.0;
    let mut keep = sorted.len();
    for (i, &(_, q)) in sorted.iter().enumerate() {
        mass += q;
        if mass >= p - 1e-12 {
            keep = i + 1;
            break;
        }
    }
    sorted.truncate(keep);
    let total: f64 = sorted.iter().map(|(_, q)| q).sum();
    sorted.into_iter().map(|(t, q)| (t, q / total)).collect()
}

/// Stateful sampler for one prompt/constraint; memoizes satisfaction
/// scores across all of its draws.
pub struct ReweightedSampler<'a> {
    backend: &'a dyn LanguageModel,
    config: &'a DecoderConfig,
    prompt: Vec<TokenId>,
    cache: ScoreCache<'a>,
}

impl<'a> ReweightedSampler<'a> {
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

    /// Adjusted next-token distribution after `generated`, before nucleus
    /// truncation: `(token, probability, base logprob)`.
    pub fn reweighted(&mut self, generated: &[TokenId]) -> Result<Vec<(TokenId, f64, f64)>> {
        let mut ctx = vec![self.backend.bos_id()];
        ctx.extend_from_slice(&self.prompt);
        ctx.extend_from_slice(generated);
        let dist = self
            .backend
            .next_token_logprobs(&ctx, TopN::N(self.config.sampling.top_k_reweight))?;
        let eos = self.backend.eos_id();
        let mut adjusted: Vec<f64> = dist.entries().iter().map(|&(_, lp)| lp).collect();
        if self.config.lambda != 0.0 {
            let prefixes: Vec<Vec<TokenId>> = dist
                .entries()
                .iter()
                .map(|&(t, _)| {
                    let mut p = generated.to_vec();
                    p.push(t);
                    strip_eos(&p, eos).to_vec()
                })
                .collect();
            let scores = self.cache.score_all(&prefixes)?;
            for (a, s) in adjusted.iter_mut().zip(scores) {
                *a += self.config.lambda * s.value;
            }
        }
        let max = adjusted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY || max.is_nan() {
            return Err(Error::DegenerateDistribution);
        }
        let weights: Vec<f64> = adjusted.iter().map(|a| (a - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        Ok(dist
            .entries()
            .iter()
            .zip(weights)
            .map(|(&(t, lp), w)| (t, w / z, lp))
            .collect())
    }

    /// The distribution actually sampled from at this step.
    pub fn step_distribution(&mut self, generated: &[TokenId]) -> Result<Vec<(TokenId, f64)>> {
        let probs: Vec<(TokenId, f64)> = self
            .reweighted(generated)?
            .into_iter()
            .map(|(t, p, _)| (t, p))
            .collect();
        Ok(nucleus(&probs, self.config.sampling.nucleus_p))
    }

    pub fn generate(&mut self, rng: &mut impl Rng) -> Result<Generation> {
        let eos = self.backend.eos_id();
        let mut tokens = Vec::new();
        let mut base = 0.0;
        let mut finished = false;
        while tokens.len() < self.config.sampling.max_new_tokens {
            let full = self.reweighted(&tokens)?;
            let probs: Vec<(TokenId, f64)> = full.iter().map(|&(t, p, _)| (t, p)).collect();
            let dist = nucleus(&probs, self.config.sampling.nucleus_p);
            let t = draw(&dist, rng);
            base += full.iter().find(|e| e.0 == t).map(|e| e.2).unwrap_or(0.0);
            if t == eos {
                finished = true;
                break;
            }
            tokens.push(t);
        }
        Ok(Generation {
            text: self.backend.detokenize(&tokens),
            tokens,
            base_logprob: base,
            finished,
        })
    }
}

fn draw(dist: &[(TokenId, f64)], rng: &mut impl Rng) -> TokenId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(t, p) in dist {
        acc += p;
        if u < acc {
            return t;
        }
    }
    dist.last().expect("nucleus is never empty").0
}

/// Draws `num_samples` independent generations from one seeded rng.
pub fn sample_reweighted(
    prompt: &str,
    constraint: &Constraint,
    config: &DecoderConfig,
    backend: &dyn LanguageModel,
    scorer: &dyn SatisfactionScorer,
) -> Result<SampleOutput> {
    config.validate()?;
    if config.mode != DecodeMode::Sample {
        return Err(Error::InvalidConfig(
            "sample_reweighted requires mode = sample".into(),
        ));
    }
    let prompt_ids = backend.tokenize(prompt);
    let mut sampler = ReweightedSampler::new(&prompt_ids, constraint, config, backend, scorer);
    let mut rng = ChaCha8Rng::seed_from_u64(config.sampling.rng_seed);
    let generations = (0..config.sampling.num_samples)
        .map(|_| sampler.generate(&mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleOutput {
        generations,
        scorer_calls: sampler.scorer_calls(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::TableModel;
    use crate::constraint::{verbalize, FnScorer, Payload};
    use crate::decoder::SamplingConfig;

    fn ab() -> TableModel {
        TableModel::new(["A", "B"])
            .unwrap()
            .with_default(&[("A", 0.8), ("B", 0.2)])
            .unwrap()
    }

    fn sample_config(lambda: f64, k: usize, p: f64) -> DecoderConfig {
        DecoderConfig {
            lambda,
            mode: DecodeMode::Sample,
            sampling: SamplingConfig {
                top_k_reweight: k,
                nucleus_p: p,
                max_new_tokens: 3,
                num_samples: 4,
                rng_seed: 7,
            },
            ..Default::default()
        }
    }

    #[test]
    fn hand_computed_reweighting() {
        let m = ab();
        let c = verbalize(Payload::Custom("A".into()), &m).unwrap();
        let s = FnScorer::new(|o: &[TokenId]| if o.last() == Some(&3) { 0.1f64.ln() } else { 0.0 });
        let cfg = sample_config(1.0, 3, 1.0);
        let mut sampler = ReweightedSampler::new(&[], &c, &cfg, &m, &s);
        let d = sampler.reweighted(&[]).unwrap();
        let pa = d.iter().find(|e| e.0 == 3).unwrap().1;
        let pb = d.iter().find(|e| e.0 == 4).unwrap().1;
        // softmax{ln 0.8 + ln 0.1, ln 0.2} = {0.08, 0.2} / 0.28
        assert!((pa - 0.08 / 0.28).abs() < 1e-9);
        assert!((pb - 0.2 / 0.28).abs() < 1e-9);
        assert!((pa - 0.2857).abs() < 1e-4);
    }

    #[test]
    fn nucleus_truncates_on_adjusted_mass() {
        let probs = [(3, 0.5), (4, 0.3), (5, 0.2)];
        assert_eq!(nucleus(&probs, 0.5), vec![(3, 1.0)]);
        let two = nucleus(&probs, 0.7);
        assert_eq!(two.len(), 2);
        assert!((two[0].1 - 0.625).abs() < 1e-12);
        assert_eq!(nucleus(&probs, 1.0).len(), 3);
    }

    #[test]
    fn seeded_runs_repeat() {
        let m = ab();
        let c = verbalize(Payload::Toxicity, &m).unwrap();
        let s = FnScorer::new(|_: &[TokenId]| 0.0);
        let cfg = sample_config(0.5, 2, 0.9);
        let a = sample_reweighted("", &c, &cfg, &m, &s).unwrap();
        let b = sample_reweighted("", &c, &cfg, &m, &s).unwrap();
        assert_eq!(a.generations, b.generations);
        assert_eq!(a.generations.len(), 4);
        assert!(a.generations.iter().all(|g| g.tokens.len() <= 3));
    }

    #[test]
    fn degenerate_distribution() {
        let m = ab();
        let c = verbalize(Payload::Custom("A".into()), &m).unwrap();
        let s = FnScorer::new(|_: &[TokenId]| f64::NEG_INFINITY);
        let cfg = sample_config(1.0, 3, 0.9);
        assert!(matches!(
            sample_reweighted("", &c, &cfg, &m, &s),
            Err(Error::DegenerateDistribution)
        ));
    }
}
