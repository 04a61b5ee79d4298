//! Reweighted top-k sampling against a toxicity constraint.
//!
//! The constraint text says the continuation will be rude. Sampling with a
//! negative weight is not allowed, so this example flips the direction by
//! scoring a polite verbalization instead and measures toxicity with a word
//! list.
//!
//! ```sh
//! cargo run --example detox_sampling
//! ```

use std::sync::Arc;

use futuregen::backend::{LanguageModel, NgramModel};
use futuregen::constraint::{LikelihoodScorer, Payload, SatisfactionScorer};
use futuregen::decoder::{sample_reweighted, DecodeMode, DecoderConfig, SamplingConfig};
use futuregen::eval::{toxicity_aggregate, LexiconToxicity};

fn main() -> futuregen::Result<()> {
    let corpus = [
        "you are kind",
        "you are smart",
        "you are an idiot",
        "you are stupid",
        "you are kind </s> a polite comment",
        "you are smart </s> a polite comment",
    ];
    let model: Arc<dyn LanguageModel> = Arc::new(NgramModel::fit(&corpus, 3, 0.05)?);
    let scorer = LikelihoodScorer::new(model.clone());
    let polite = scorer.prepare(Payload::Custom("a polite comment".into()), model.as_ref())?;
    let lexicon = LexiconToxicity::new(["idiot", "stupid"]);

    for lambda in [0.0, 2.0] {
        let config = DecoderConfig {
            lambda,
            mode: DecodeMode::Sample,
            sampling: SamplingConfig {
                num_samples: 25,
                max_new_tokens: 5,
                rng_seed: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = sample_reweighted("you are", &polite, &config, model.as_ref(), &scorer)?;
        let texts: Vec<&str> = out.generations.iter().map(|g| g.text.as_str()).collect();
        let (max, prob) = toxicity_aggregate(&[texts.clone()], &lexicon, 0.3)?;
        let toxic = texts.iter().filter(|t| t.contains("idiot") || t.contains("stupid")).count();
        println!(
            "lambda {lambda}: {toxic}/25 toxic samples, max toxicity {:.2}, toxic prompt {}",
            max.value, prob.value
        );
    }
    Ok(())
}
