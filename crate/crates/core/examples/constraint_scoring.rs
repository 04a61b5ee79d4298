//! Score how likely partial outputs are to end up satisfying a constraint.
//!
//! Likelihood mode reads the model's probability of the verbalized
//! constraint after the prefix and a separator. Binary mode asks a yes/no
//! question and normalizes the two answers.
//!
//! ```sh
//! cargo run --example constraint_scoring
//! ```

use std::sync::Arc;

use futuregen::backend::{LanguageModel, NgramModel, TableModel};
use futuregen::constraint::{BinaryScorer, LikelihoodScorer, Payload, Prefix, SatisfactionScorer};

fn main() -> futuregen::Result<()> {
    // Sentences followed by the concepts they mention, joined by the
    // separator, so the model learns which prefixes lead to which concepts.
    let corpus = [
        "I drive my car </s> car drive",
        "I drive through snow </s> drive snow",
        "snow covers the car </s> snow car",
        "I read a book </s> book",
    ];
    let model: Arc<dyn LanguageModel> = Arc::new(NgramModel::fit(&corpus, 3, 0.05)?);
    let scorer = LikelihoodScorer::new(model.clone());
    let constraint = scorer.prepare(Payload::Custom("snow".into()), model.as_ref())?;

    for prefix in ["I drive through snow", "I drive my car", "I read a book"] {
        let ids = model.tokenize(prefix);
        let r = scorer.score(
            Prefix {
                prompt: &[],
                output: &ids,
                model: model.as_ref(),
            },
            &constraint,
        )?;
        println!("R({prefix:?}) = {:.4}", r.value);
    }

    // A toy judge that answers " Yes" with probability 0.7 and " No" with
    // 0.1 regardless of the question.
    let judge: Arc<dyn LanguageModel> = Arc::new(
        TableModel::new(["Yes", "No", "Maybe"])?
            .with_default(&[("Yes", 0.7), ("No", 0.1), ("Maybe", 0.2)])?,
    );
    let binary = BinaryScorer::new(judge.clone());
    let doc = binary.prepare(Payload::Evidence(vec!["Yes".into()]), judge.as_ref())?;
    let claim = judge.tokenize("Yes");
    let r = binary.score(
        Prefix {
            prompt: &[],
            output: &claim,
            model: judge.as_ref(),
        },
        &doc,
    )?;
    println!("binary R = {:.4} (ln 0.875 = {:.4})", r.value, 0.875f64.ln());
    Ok(())
}
