//! Joint goal accuracy of the noisy oracle as the corruption rate grows.
//!
//! ```text
//! cargo run --example noisy_sweep
//! ```

use std::path::PathBuf;

use mintl::corpus::load_corpus;
use mintl::kb::KnowledgeBase;
use mintl::pipeline::{evaluate_dst, run_dialogue, Env, NoisyOracle, RunOptions};
use mintl::state::PipelineConfig;

const SEEDS: u64 = 20;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic/corpus.json");
    let corpus = load_corpus(&path)?;
    let kb = KnowledgeBase::empty();
    let cfg = PipelineConfig::multiwoz(3, 0)?;
    let env = Env {
        kb: &kb,
        schema: &corpus.schema,
        cfg: &cfg,
    };

    println!("{:>5}  {:>9}", "p", "joint acc");
    for p in [0.0, 0.1, 0.25, 0.5, 0.75, 1.0] {
        let mut total = 0.0;
        for seed in 0..SEEDS {
            let mut g = NoisyOracle::new(&corpus.dialogues, &corpus.schema, p, seed)?;
            let runs = corpus
                .dialogues
                .iter()
                .map(|d| run_dialogue(d, &mut g, env, RunOptions::default()))
                .collect::<Result<Vec<_>, _>>()?;
            total += evaluate_dst(&corpus.dialogues, &runs)?.joint_acc.unwrap_or(0.0);
        }
        println!("{p:>5.2}  {:>9.4}", total / SEEDS as f64);
    }
    Ok(())
}
