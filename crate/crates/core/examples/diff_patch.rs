//! Diff two belief states into a Lev span and patch it back.
//!
//! ```text
//! cargo run --example diff_patch
//! ```

use mintl::lev::classify_edit;
use mintl::{apply_lev, compute_lev, edit_count, serialize_lev, DialogueState, DomainSpec, Schema};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schema = Schema::new(vec![
        DomainSpec::new("hotel", &["name", "stars", "area", "people", "day", "stay"]).booking(&["people", "day", "stay"]),
        DomainSpec::new("restaurant", &["food", "area", "day", "name"]),
    ])?;

    let prev = DialogueState::new()
        .with("hotel", "stars", "5")
        .with("hotel", "area", "centre")
        .with("hotel", "day", "sunday")
        .with("restaurant", "food", "thai")
        .with("restaurant", "area", "centre")
        .with("restaurant", "day", "sunday")
        .with("restaurant", "name", "bangkok city");
    let next = prev.clone().with("hotel", "people", "10");

    let lev = compute_lev(&prev, &next, &schema)?;
    println!("one new slot:     {}", serialize_lev(&lev));
    assert_eq!(apply_lev(&prev, &lev, &schema)?, next);

    // A user who changes their mind: one substitution, one deletion.
    let mut changed = next.clone().with("hotel", "stars", "4");
    changed.remove(&mintl::SlotKey::new("restaurant", "name"));
    let lev = compute_lev(&next, &changed, &schema)?;
    println!("edit and delete:  {}", serialize_lev(&lev));
    for (key, _) in lev.edits() {
        let kind = classify_edit(&next, &changed, &key, &schema)?.expect("key differs");
        println!("  {kind:<3} {key}");
    }
    println!("edits: {}", edit_count(&lev));
    assert_eq!(apply_lev(&next, &lev, &schema)?, changed);

    let unchanged = compute_lev(&changed, &changed, &schema)?;
    println!("no change:        {}", serialize_lev(&unchanged));
    Ok(())
}
