//! Fit a bigram model and query it the way the decoder does.
//!
//! ```sh
//! cargo run --example ngram_backend
//! ```

use futuregen::backend::{LanguageModel, NgramModel, TopN};

fn main() -> futuregen::Result<()> {
    let corpus = [
        "the dog runs in the park",
        "the cat sleeps in the sun",
        "a dog chases the cat",
        "the sun is warm",
    ];
    let model = NgramModel::fit(&corpus, 2, 0.1)?;
    println!("vocabulary: {} words plus eos", model.vocab().output_size() - 1);

    let context = model.encode_with_bos("the");
    let dist = model.next_token_logprobs(&context, TopN::N(5))?;
    println!("after \"the\":");
    for &(id, lp) in dist.entries() {
        println!("  {:<8} p={:.3}", model.surface(id), lp.exp());
    }

    let continuation = model.tokenize("dog runs");
    let s = model.score_continuation(&context, &continuation)?;
    println!(
        "log p(\"dog runs\" | \"the\") = {:.4} over {} tokens",
        s.total_logprob, s.token_count
    );
    Ok(())
}
