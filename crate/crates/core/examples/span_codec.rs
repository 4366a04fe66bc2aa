//! Serialize and parse Lev spans, full belief spans and encoder inputs.
//!
//! ```text
//! cargo run --example span_codec
//! ```

use mintl::codec::encode_context;
use mintl::state::Utterance;
use mintl::{parse_full_state, parse_lev, serialize_full_state, serialize_lev, DialogueState, DomainSpec, Schema};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let schema = Schema::new(vec![
        DomainSpec::new("hotel", &["stars", "area", "people", "day"]),
        DomainSpec::new("restaurant", &["food", "area", "day", "name"]),
    ])?;

    let report = parse_lev("<SOB> [hotel] people 10 area NULL <EOB>", &schema);
    assert!(report.is_clean());
    println!("canonical:  {}", serialize_lev(&report.value));

    // The parser never fails; it keeps what it can and reports the rest.
    let messy = "noise <SOB> [hotel] people 10 [spa] jets on [restaurant] food <EOB> tail";
    let report = parse_lev(messy, &schema);
    println!("recovered:  {}", serialize_lev(&report.value));
    for d in &report.diagnostics {
        println!("  token {:>2}: {}", d.position, d.kind);
    }

    let state = DialogueState::new()
        .with("hotel", "stars", "5")
        .with("restaurant", "food", "thai")
        .with("restaurant", "name", "bangkok city");
    let text = serialize_full_state(&state, &schema);
    println!("full state: {text}");
    assert_eq!(parse_full_state(&text, &schema).value, state);

    let window = [
        Utterance::user("Can you help me book a 5 star hotel near the restaurant on the same day?"),
        Utterance::system("For how many people?"),
        Utterance::user("10 people"),
    ];
    println!("encoded:    {}", encode_context(&state, &window, &schema)?);
    Ok(())
}
