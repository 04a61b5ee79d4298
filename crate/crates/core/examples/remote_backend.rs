//! Decode against a model server named by `BACKEND_URL`.
//!
//! ```sh
//! BACKEND_URL=http://localhost:8000 cargo run --example remote_backend -- "The weather today"
//! ```

use std::sync::Arc;

use futuregen::backend::{LanguageModel, RemoteBackend};
use futuregen::constraint::{LikelihoodScorer, Payload, SatisfactionScorer};
use futuregen::decoder::{decode, keyword_token_set, DecoderConfig};

fn main() -> futuregen::Result<()> {
    let Some(backend) = RemoteBackend::from_env() else {
        eprintln!("set BACKEND_URL to a scoring server, e.g. http://localhost:8000");
        return Ok(());
    };
    let prompt = std::env::args().nth(1).unwrap_or_else(|| "The weather today".into());
    let model: Arc<dyn LanguageModel> = Arc::new(backend);
    let scorer = LikelihoodScorer::new(model.clone());
    let keywords = vec!["snow".to_string(), "cold".to_string()];
    let constraint = scorer.prepare(Payload::Keywords(keywords.clone()), model.as_ref())?;
    let config = DecoderConfig {
        keyword_tokens: keyword_token_set(&keywords, model.as_ref()),
        ..Default::default()
    };
    let out = decode(&prompt, &constraint, &config, model.as_ref(), &scorer)?;
    println!("{prompt}{}", out.text);
    println!("base {:.3}, R {:?}, {} scorer calls", out.best.base_logprob, out.best.r(), out.scorer_calls);
    Ok(())
}
