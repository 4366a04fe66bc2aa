//! Run the turn loop with the gold oracle and evaluate it end to end.
//!
//! ```text
//! cargo run --example gold_pipeline [-- <corpus.json> <kb-dir>]
//! ```
//!
//! Defaults to the bundled synthetic corpus. The gold oracle replays the
//! annotated Lev spans and responses, so the report is the corpus's own
//! ceiling: joint accuracy 1.0, BLEU 100, and whatever Inform and Success
//! the gold responses earn.

use std::path::PathBuf;

use mintl::corpus::load_corpus;
use mintl::kb::KnowledgeBase;
use mintl::pipeline::{evaluate_e2e, run_dialogue, Env, GoldOracle, RunOptions, TargetMode};
use mintl::state::PipelineConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic");
    let mut args = std::env::args_os().skip(1).map(PathBuf::from);
    let corpus_path = args.next().unwrap_or_else(|| fixtures.join("corpus.json"));
    let kb_path = args.next().unwrap_or_else(|| fixtures.join("kb"));

    let corpus = load_corpus(&corpus_path)?;
    let kb = KnowledgeBase::load_dir(&kb_path, &corpus.schema)?;
    let cfg = PipelineConfig::multiwoz(2, 0)?;
    let env = Env {
        kb: &kb,
        schema: &corpus.schema,
        cfg: &cfg,
    };
    let mut oracle = GoldOracle::new(&corpus.dialogues, &corpus.schema, TargetMode::Lev)?;

    let runs = corpus
        .dialogues
        .iter()
        .map(|d| run_dialogue(d, &mut oracle, env, RunOptions::default()))
        .collect::<Result<Vec<_>, _>>()?;

    let first = &runs[0];
    println!("dialogue {}", first.dialogue_id);
    for t in &first.traces {
        println!("  turn {} {:<5} {}", t.turn, t.kb_state.to_string(), t.raw_state_output);
        println!("         {}", t.lexicalized_response);
    }

    let report = evaluate_e2e(&corpus.dialogues, &runs, &kb, &corpus.schema)?;
    print!("{}", report.table());
    Ok(())
}
