//! Reference implementations shared by the integration tests: random toy
//! models, a brute-force decoder, a plain beam search and a count-based
//! n-gram oracle.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use futuregen::backend::{LanguageModel, NgramModel, TokenId, TopN};
use futuregen::constraint::FnScorer;
use rand::seq::SliceRandom;
use rand::Rng;

pub const WORDS: [&str; 8] = ["ant", "bee", "cat", "dog", "elk", "fox", "gnu", "hen"];

/// A random n-gram model over the first `n_words` of [`WORDS`], and a random
/// prompt drawn from the same words.
pub struct Instance {
    pub model: NgramModel,
    pub prompt: String,
    pub words: Vec<&'static str>,
    pub max_len: usize,
}

pub fn random_corpus(rng: &mut impl Rng, words: &[&str], lines: usize, max_words: usize) -> Vec<String> {
    (0..lines)
        .map(|_| {
            let n = rng.gen_range(1..=max_words);
            (0..n).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
        })
        .collect()
}

/// Sizes are chosen so a beam of `n_words^max_len + 1` stays small; that
/// width never fills, so every prefix and every finished sequence survives.
pub fn random_instance(rng: &mut impl Rng) -> Instance {
    let n_words: usize = rng.gen_range(2..=7);
    let mut cap = 1;
    while cap < 6 && n_words.pow(cap as u32 + 1) <= 512 {
        cap += 1;
    }
    let max_len = rng.gen_range(1..=cap);
    let words: Vec<&'static str> = WORDS[..n_words].to_vec();
    let lines = rng.gen_range(2..=8);
    let mut corpus = random_corpus(rng, &words, lines, 5);
    // Every word must appear so the vocabulary is exactly `words`.
    corpus.push(words.join(" "));
    let order = rng.gen_range(1..=3);
    let alpha = [0.1, 0.5, 1.0][rng.gen_range(0..3)];
    let model = NgramModel::fit(&corpus, order, alpha).unwrap();
    let prompt = random_corpus(rng, &words, 1, 2).remove(0);
    let prompt = if rng.gen_bool(0.3) { String::new() } else { prompt };
    Instance {
        model,
        prompt,
        words,
        max_len,
    }
}

/// Deterministic pseudo-random satisfaction in `[-4, 0]` keyed on the
/// output tokens.
pub fn hash_r(output: &[TokenId]) -> f64 {
    let mut h = DefaultHasher::new();
    output.hash(&mut h);
    -((h.finish() % 10_007) as f64) / 2_500.0
}

pub fn hash_scorer() -> FnScorer<fn(&[TokenId]) -> f64> {
    FnScorer::new(hash_r as fn(&[TokenId]) -> f64)
}

/// Best combined score `base + lambda * R(content)` over every sequence that
/// ends in eos within `max_len` tokens, found by exhaustive enumeration.
pub fn brute_force_best(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    r: &dyn Fn(&[TokenId]) -> f64,
    lambda: f64,
    max_len: usize,
) -> Option<(f64, Vec<TokenId>)> {
    fn walk(
        model: &dyn LanguageModel,
        ctx: &mut Vec<TokenId>,
        out: &mut Vec<TokenId>,
        base: f64,
        r: &dyn Fn(&[TokenId]) -> f64,
        lambda: f64,
        max_len: usize,
        best: &mut Option<(f64, Vec<TokenId>)>,
    ) {
        let dist = model.next_token_logprobs(ctx, TopN::All).unwrap();
        for &(t, lp) in dist.entries() {
            if lp == f64::NEG_INFINITY {
                continue;
            }
            if t == model.eos_id() {
                let score = if lambda == 0.0 {
                    base + lp
                } else {
                    base + lp + lambda * r(out)
                };
                if best.as_ref().map_or(true, |(b, _)| score > *b) {
                    let mut seq = out.clone();
                    seq.push(t);
                    *best = Some((score, seq));
                }
            } else if out.len() + 1 < max_len {
                ctx.push(t);
                out.push(t);
                walk(model, ctx, out, base + lp, r, lambda, max_len, best);
                ctx.pop();
                out.pop();
            }
        }
    }
    let mut ctx = vec![model.bos_id()];
    ctx.extend_from_slice(prompt);
    let mut best = None;
    walk(model, &mut ctx, &mut Vec::new(), 0.0, r, lambda, max_len, &mut best);
    best
}

fn plain_order(a: &(Vec<TokenId>, f64), b: &(Vec<TokenId>, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then(a.0.len().cmp(&b.0.len()))
        .then_with(|| a.0.cmp(&b.0))
}

/// Textbook beam search on base log-probability alone. Ties go to the
/// shorter sequence, then the lexicographically smaller one.
pub fn plain_beam(
    model: &dyn LanguageModel,
    prompt: &[TokenId],
    k: usize,
    pool: usize,
    max_len: usize,
) -> Vec<TokenId> {
    let eos = model.eos_id();
    let mut live: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<(Vec<TokenId>, f64)> = Vec::new();
    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let mut cands = Vec::new();
        for (seq, base) in &live {
            let mut ctx = vec![model.bos_id()];
            ctx.extend_from_slice(prompt);
            ctx.extend_from_slice(seq);
            let mut next = model.next_token_logprobs(&ctx, TopN::All).unwrap().entries().to_vec();
            next.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for &(t, lp) in next.iter().take(pool) {
                if lp > f64::NEG_INFINITY {
                    let mut s = seq.clone();
                    s.push(t);
                    cands.push((s, base + lp));
                }
            }
        }
        cands.sort_by(plain_order);
        live = Vec::new();
        for c in cands {
            if live.len() == k {
                break;
            }
            if c.0.last() == Some(&eos) {
                finished.push(c);
            } else {
                live.push(c);
            }
        }
    }
    let pick = |v: &[(Vec<TokenId>, f64)]| v.iter().min_by(|a, b| plain_order(a, b)).cloned();
    pick(&finished).or_else(|| pick(&live)).unwrap().0
}

/// N-gram probabilities recomputed from raw corpus counts over surface
/// strings, independent of the library's id-based tables.
pub struct CountOracle {
    order: usize,
    alpha: f64,
    output_size: usize,
    counts: HashMap<(Vec<String>, String), u64>,
    totals: HashMap<Vec<String>, u64>,
}

impl CountOracle {
    pub fn new(corpus: &[String], order: usize, alpha: f64) -> Self {
        let mut words: Vec<&str> = corpus.iter().flat_map(|l| l.split_whitespace()).collect();
        words.sort_unstable();
        words.dedup();
        let mut counts = HashMap::new();
        let mut totals = HashMap::new();
        for line in corpus {
            let mut seq: Vec<String> = vec!["<s>".into(); order - 1];
            seq.extend(line.split_whitespace().map(String::from));
            seq.push("</s>".into());
            for i in order - 1..seq.len() {
                let ctx = seq[i + 1 - order..i].to_vec();
                *counts.entry((ctx.clone(), seq[i].clone())).or_insert(0) += 1;
                *totals.entry(ctx).or_insert(0) += 1;
            }
        }
        Self {
            order,
            alpha,
            output_size: words.len() + 1,
            counts,
            totals,
        }
    }

    /// `ln P(word | history)`; `history` starts after bos.
    pub fn logprob(&self, history: &[String], word: &str) -> f64 {
        let mut padded: Vec<String> = vec!["<s>".into(); self.order - 1];
        padded.extend_from_slice(history);
        let ctx = padded[padded.len() + 1 - self.order..].to_vec();
        let c = self.counts.get(&(ctx.clone(), word.to_string())).copied().unwrap_or(0);
        let n = self.totals.get(&ctx).copied().unwrap_or(0);
        ((c as f64 + self.alpha) / (n as f64 + self.alpha * self.output_size as f64)).ln()
    }
}
