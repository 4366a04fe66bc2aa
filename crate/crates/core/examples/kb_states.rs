//! The 15 KB states, and a query plus booking against the bundled tables.
//!
//! ```text
//! cargo run --example kb_states
//! ```

use std::path::Path;

use mintl::kb::{attempt_booking, categorize_kb_state, query, KnowledgeBase};
use mintl::state::{BookingOutcome, PipelineConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = PipelineConfig::multiwoz(2, 0)?;
    let outcomes = [BookingOutcome::None, BookingOutcome::Fail, BookingOutcome::Success];

    for domain in ["train", "hotel"] {
        let t = cfg.thresholds_for(domain).expect("multiwoz thresholds");
        println!("{domain} (T1={}, T2={})", t.t1, t.t2);
        println!("  {:<8} {:>6} {:>6} {:>7}", "matches", "none", "fail", "success");
        let counts = std::iter::once(None).chain((0..=t.t2 + 1).map(Some));
        for count in counts {
            let row: Vec<String> = outcomes
                .iter()
                .map(|b| categorize_kb_state(count, *b, domain, &cfg).map(|k| k.to_string()))
                .collect::<Result<_, _>>()?;
            let label = count.map_or("-".to_string(), |n| n.to_string());
            println!("  {label:<8} {:>6} {:>6} {:>7}", row[0], row[1], row[2]);
        }
    }

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/party_of_ten");
    let corpus = mintl::corpus::load_corpus(&dir.join("corpus.json"))?;
    let kb = KnowledgeBase::load_dir(&dir.join("kb"), &corpus.schema)?;
    let dialogue = &corpus.dialogues[0];
    let turn = dialogue.turns.last().expect("turns");
    let matches = query(&kb, &turn.gold_state, "hotel", &corpus.schema);
    let booking = attempt_booking(&dialogue.id, turn, &turn.gold_state, "hotel", &corpus.schema, &cfg);
    let k = categorize_kb_state(Some(matches.len()), booking, "hotel", &cfg)?;
    println!("5-star hotel in the centre: {} matches, booking {booking:?} -> {k}", matches.len());
    Ok(())
}
