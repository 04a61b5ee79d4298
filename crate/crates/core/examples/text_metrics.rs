//! Coverage, diversity and recall on a few outputs.
//!
//! ```sh
//! cargo run --example text_metrics
//! ```

use futuregen::eval::{coverage, distinct_n, substring_recall, MatchMode};

fn main() -> futuregen::Result<()> {
    let concepts = ["car", "drive", "snow"];
    for output in [
        "I drive my car during the winter through the snow",
        "I drive my car",
        "Cars drove through snowy streets",
    ] {
        println!(
            "{output:?}\n  coverage {:.3} exact, {:.3} stemmed; distinct-1 {:.3}, distinct-2 {:.3}",
            coverage(output, &concepts, MatchMode::Exact)?,
            coverage(output, &concepts, MatchMode::Stem)?,
            distinct_n(output, 1)?,
            distinct_n(output, 2)?,
        );
    }
    let answers = ["Paris", "1815"];
    println!(
        "recall: {:.2}",
        substring_recall("The battle of 1815 ended near Paris.", &answers)?
    );
    Ok(())
}
