//! Draw the 5%, 10% and 20% low-resource training subsets.
//!
//! ```text
//! cargo run --example low_resource_sample [-- <corpus.json> [seed]]
//! ```
//!
//! Without arguments a 2,000-dialogue corpus is built by relabelling copies
//! of the synthetic fixture, since the presets need at least 1,600 dialogues.

use std::path::PathBuf;

use mintl::corpus::{load_corpus, subsample, Preset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let corpus = match args.next() {
        Some(p) => load_corpus(&PathBuf::from(p))?,
        None => {
            let base = load_corpus(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic/corpus.json"))?;
            let copies = base
                .dialogues
                .iter()
                .cycle()
                .take(2000)
                .enumerate()
                .map(|(i, d)| {
                    let mut d = d.clone();
                    d.id = format!("{}-{i:04}", d.id);
                    d
                })
                .collect();
            base.with_dialogues(copies)
        }
    };
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    println!("{} dialogues, seed {seed}", corpus.dialogues.len());
    for preset in [Preset::FivePct, Preset::TenPct, Preset::TwentyPct] {
        let picked = subsample(&corpus.dialogues, preset.count(), seed)?;
        let head: Vec<&str> = picked.iter().take(3).map(|d| d.id.as_str()).collect();
        println!("{preset:?}: {} dialogues, first {head:?}", picked.len());
    }
    Ok(())
}
