//! Tokens generated per turn for Lev targets against full belief spans.
//!
//! ```text
//! cargo run --release --example not_bench
//! ```

use std::path::PathBuf;

use mintl::corpus::load_corpus;
use mintl::kb::KnowledgeBase;
use mintl::pipeline::{bench_not_latency, Env, GoldOracle, TargetMode};
use mintl::state::PipelineConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic/corpus.json");
    let corpus = load_corpus(&path)?;
    let kb = KnowledgeBase::empty();
    let cfg = PipelineConfig::multiwoz(2, 0)?;
    let env = Env {
        kb: &kb,
        schema: &corpus.schema,
        cfg: &cfg,
    };

    println!("{:<10} {:>6} {:>8} {:>12}", "target", "turns", "NoT", "latency ms");
    for (name, mode) in [("lev", TargetMode::Lev), ("full_span", TargetMode::FullSpan)] {
        let mut g = GoldOracle::new(&corpus.dialogues, &corpus.schema, mode)?;
        let r = bench_not_latency(&corpus.dialogues, &mut g, env, mode)?;
        println!("{name:<10} {:>6} {:>8.2} {:>12.4}", r.turns, r.not, r.latency_ms);
    }
    Ok(())
}
