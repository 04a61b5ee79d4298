//! Does the scorer rank constraint-satisfying sequences above violating
//! ones? Builds prefix pairs from sentence pairs and reports accuracy on
//! both.
//!
//! ```sh
//! cargo run --example ranking_benchmark
//! ```

use std::sync::Arc;

use futuregen::backend::{LanguageModel, NgramModel};
use futuregen::constraint::{LikelihoodScorer, Payload};
use futuregen::eval::{build_prefix_pairs, ranking_accuracy, PairKind, RankingPair};

fn main() -> futuregen::Result<()> {
    let corpus = [
        "the dog runs in the park </s> dog park",
        "the dog sleeps </s> dog",
        "a cat sits on the mat </s> cat mat",
        "the cat runs home </s> cat",
    ];
    let model: Arc<dyn LanguageModel> = Arc::new(NgramModel::fit(&corpus, 3, 0.05)?);
    let scorer = LikelihoodScorer::new(model.clone());

    let kw = |w: &str| Payload::Keywords(vec![w.to_string()]);
    let pairs = vec![
        RankingPair::new("1", "the dog runs in the park", "a cat sits on the mat", Payload::Custom("dog".into()), PairKind::Sentence)?,
        RankingPair::new("2", "a cat sits on the mat", "the dog sleeps", Payload::Custom("cat".into()), PairKind::Sentence)?,
        RankingPair::new("3", "the dog sleeps", "the cat runs home", kw("dog"), PairKind::Sentence)?,
    ];
    let sentences = ranking_accuracy(&pairs, &scorer, model.as_ref(), 0.0)?;
    println!("sentence pairs: {:.4} over {}", sentences.value, sentences.support);

    let prefixes = build_prefix_pairs(&pairs, &[2, 2, 2], 0)?;
    for p in &prefixes {
        println!("  {:?} vs {:?}", p.positive, p.negative);
    }
    let r = ranking_accuracy(&prefixes, &scorer, model.as_ref(), 0.0)?;
    println!("prefix pairs: {:.4} over {}", r.value, r.support);
    for d in &r.details {
        println!("  {d}");
    }
    Ok(())
}
