//! Replays the fixture harness config across the ablation matrix and prints
//! the markdown report.
//!
//! ```sh
//! cargo run -p callsim-core --example ablation_report [path/to/harness.toml]
//! ```

use std::path::PathBuf;

use callsim::harness::{evaluate, replay_all, EvalDeps, EvalOptions, HarnessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/harness.toml"));
    let config = HarnessConfig::load(&path)?;
    let engine = config.engine()?;
    let runs = config.expand(&engine.knowledge.protocols)?;
    let logs = replay_all(&runs, &engine)?;
    let report = evaluate(&logs, &engine.corpus, &EvalDeps::of(&engine), &EvalOptions::default())?;
    println!("{}", report.to_markdown());
    Ok(())
}
