//! Generates a synthetic survey, runs a small roster and writes the run
//! directory (default `./synthetic-run`).
//!
//! cargo run --release -p nutriscreen --example synthetic_benchmark -- [out_dir] [marginal|planted|strong]

use std::path::PathBuf;

use nutriscreen::harness::{run_benchmark, write_run, BenchmarkConfig};
use nutriscreen::preprocess::{encode, Schema};
use nutriscreen::synth::{builtin_marginals, generate, signal_for, SynthMode};

fn main() -> nutriscreen::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic-run".into()));
    let mode = match args.next().as_deref() {
        Some("marginal") => SynthMode::Marginal,
        Some("strong") => SynthMode::Strong,
        _ => SynthMode::Planted,
    };
    let raw = generate(&builtin_marginals(), signal_for(mode).as_ref(), 3000, 7)?;
    let ds = encode(&raw, &Schema::bundled())?;
    let names = ["tabnet", "xgboost", "adaboost", "logistic_regression", "random_forest"];
    let cfg = BenchmarkConfig { models: Some(names.iter().map(|s| s.to_string()).collect()), ..BenchmarkConfig::default() };
    let run = run_benchmark(&cfg, &ds)?;
    let report = write_run(&run, &out)?;
    print!("{}", run.leaderboard.to_csv());
    println!("report: {}", report.display());
    Ok(())
}
