//! Drive the batch front end from code: load a run configuration, decode a
//! task file and evaluate the outputs, as the `futuregen` binary does.
//!
//! ```sh
//! cargo run --example batch_config
//! ```

use std::path::Path;

use futuregen::cli::{run, Cli};
use clap::Parser;

fn main() -> anyhow::Result<()> {
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("testdata/toy");
    let dir = std::env::temp_dir().join("futuregen-batch-example");
    std::fs::create_dir_all(&dir)?;
    let decoded = dir.join("decoded.jsonl");
    let s = |p: &Path| p.to_string_lossy().into_owned();

    for lambda in ["0", "1"] {
        let code = run(Cli::parse_from([
            "futuregen".to_string(),
            "decode".into(),
            "--config".into(),
            s(&toy.join("config.toml")),
            "--lambda".into(),
            lambda.into(),
            "--out".into(),
            s(&decoded),
            s(&toy.join("tasks.jsonl")),
        ]))?;
        println!("lambda {lambda} (exit {code}):\n{}", std::fs::read_to_string(&decoded)?);
        run(Cli::parse_from([
            "futuregen".to_string(),
            "eval".into(),
            "--coverage".into(),
            "--references".into(),
            s(&toy.join("tasks.jsonl")),
            "--out".into(),
            s(&dir.join("report.json")),
            s(&decoded),
        ]))?;
    }
    Ok(())
}
