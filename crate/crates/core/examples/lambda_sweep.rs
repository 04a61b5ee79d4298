//! Decode a small dataset at several constraint weights and tabulate
//! coverage. Each task's constraint is the bare concept word, which a
//! trigram scorer can relate to the last word of the output.
//!
//! ```sh
//! cargo run --example lambda_sweep
//! ```

use std::sync::Arc;

use futuregen::backend::{LanguageModel, NgramModel};
use futuregen::constraint::{LikelihoodScorer, Payload};
use futuregen::decoder::DecoderConfig;
use futuregen::eval::{lambda_sweep, MatchMode, SweepMetric, SweepTask};

fn main() -> futuregen::Result<()> {
    let corpus = [
        "a man walks the dog",
        "a man walks the dog",
        "a man walks home",
        "a man reads a book",
        "a man walks the dog </s> dog",
        "a man reads a book </s> book",
    ];
    let model: Arc<dyn LanguageModel> = Arc::new(NgramModel::fit(&corpus, 3, 0.05)?);
    let scorer = LikelihoodScorer::new(model.clone());
    let tasks: Vec<SweepTask> = ["dog", "book"]
        .iter()
        .map(|w| SweepTask {
            id: w.to_string(),
            prompt: "a man".into(),
            payload: Payload::Custom(w.to_string()),
            references: vec![w.to_string()],
        })
        .collect();
    let config = DecoderConfig {
        beam_width: 3,
        max_len: 8,
        ..Default::default()
    };
    let metrics = [SweepMetric::Coverage(MatchMode::Exact), SweepMetric::DistinctN(1)];
    let rows = lambda_sweep(&tasks, &[0.0, 0.5, 1.0, 2.0], &config, model.as_ref(), &scorer, &metrics)?;
    println!("lambda  coverage  distinct_1  outputs");
    for row in rows {
        let outputs: Vec<String> = row.outputs.into_iter().flatten().collect();
        println!(
            "{:<6}  {:<8.3}  {:<10.3}  {outputs:?}",
            row.lambda, row.reports[0].value, row.reports[1].value
        );
    }
    Ok(())
}
