//! Trains the sparse-only and the consistency arms from one seed and prints
//! both on sparse, dense and exact held-out labels. Takes a few minutes.
//!
//! Usage: cargo run --release --example ab -- [seed]

use mcdepth::experiment::{run_ab, AbConfig, Corpus};

fn main() -> mcdepth::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = AbConfig::default();
    let corpus = Corpus::generate(&cfg, seed)?;
    let out = run_ab(&cfg, &corpus, seed)?;
    print!("{}", out.table());
    println!(
        "dense rmse gain {:.1}%, sparse d1 change {:+.2}%, {}",
        100.0 * out.dense_rmse_gain,
        100.0 * out.sparse_delta1_change,
        if out.passed { "pass" } else { "fail" }
    );
    Ok(())
}
