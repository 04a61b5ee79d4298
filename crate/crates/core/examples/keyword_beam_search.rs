//! Keyword-constrained beam search.
//!
//! The base model prefers driving home to walking in the snow. Adding the satisfaction term and
//! putting the keyword tokens into every candidate pool steers the beam
//! toward outputs that contain it.
//!
//! ```sh
//! cargo run --example keyword_beam_search
//! ```

use std::sync::Arc;

use futuregen::backend::{LanguageModel, NgramModel};
use futuregen::constraint::{LikelihoodScorer, Payload, SatisfactionScorer};
use futuregen::decoder::{decode, keyword_token_set, DecoderConfig};
use futuregen::eval::{coverage, MatchMode};

fn main() -> futuregen::Result<()> {
    let corpus = [
        "we drive the car home",
        "we drive the car home",
        "we drive the car to town",
        "we drive to the lake",
        "we walk in the snow",
        "we walk in the snow </s> This will be a sentence with these concepts: snow",
    ];
    let model: Arc<dyn LanguageModel> = Arc::new(NgramModel::fit(&corpus, 3, 0.05)?);
    let scorer = LikelihoodScorer::new(model.clone());
    let keywords = vec!["snow".to_string()];
    let constraint = scorer.prepare(Payload::Keywords(keywords.clone()), model.as_ref())?;

    for lambda in [0.0, 5.0, 20.0] {
        let config = DecoderConfig {
            lambda,
            beam_width: 4,
            max_len: 10,
            keyword_tokens: keyword_token_set(&keywords, model.as_ref()),
            ..Default::default()
        };
        let out = decode("we", &constraint, &config, model.as_ref(), &scorer)?;
        println!(
            "lambda {lambda}: {:?} coverage {:.2} ({} scorer calls)",
            out.text,
            coverage(&out.text, &keywords, MatchMode::Exact)?,
            out.scorer_calls
        );
        if lambda == 5.0 {
            for step in out.trace.iter().take(5) {
                let top = &step.beam[0];
                println!(
                    "  step {}: best {:?} base {:.3} R {:.3}",
                    step.step,
                    top.text,
                    top.base_logprob,
                    top.r.unwrap_or(0.0)
                );
            }
        }
    }
    Ok(())
}
