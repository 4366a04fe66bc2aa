#![allow(dead_code)]

use std::path::PathBuf;

use mintl::lev::EditValue;
use mintl::{DialogueState, DomainSpec, LevSpan, Schema, SlotKey, Value};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn read_json(rel: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(fixture(rel)).unwrap();
    serde_json::from_str(&text).unwrap()
}

const WORDS: [&str; 16] = [
    "north", "cheap", "4", "sunday", "the", "gonville", "hotel", "10", "centre", "guest", "house", "13:45", "kings",
    "lynn", "don't", "7.50",
];

/// Up to 5 domains of up to 8 slots. Names never occur in [`WORDS`].
pub fn random_schema<R: Rng>(rng: &mut R) -> Schema {
    let domains = rng.gen_range(1..=5);
    let specs = (0..domains)
        .map(|d| {
            let slots: Vec<String> = (0..rng.gen_range(1..=8)).map(|s| format!("s{d}{s}")).collect();
            let refs: Vec<&str> = slots.iter().map(String::as_str).collect();
            DomainSpec::new(&format!("dom{d}"), &refs)
        })
        .collect();
    Schema::new(specs).unwrap()
}

pub fn random_value<R: Rng>(rng: &mut R) -> Value {
    let n = rng.gen_range(1..=3);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    Value::new(&words.join(" ")).unwrap()
}

pub fn random_state<R: Rng>(rng: &mut R, schema: &Schema, density: f64) -> DialogueState {
    let mut s = DialogueState::new();
    for key in schema.keys() {
        if rng.gen_bool(density) {
            s.set(key, random_value(rng));
        }
    }
    s
}

/// `next` is `prev` with each key independently kept, changed, removed or added.
pub fn random_pair<R: Rng>(rng: &mut R, schema: &Schema) -> (DialogueState, DialogueState) {
    let density = rng.gen_range(0.0..=1.0);
    let prev = random_state(rng, schema, density);
    let churn = rng.gen_range(0.0..=1.0);
    let mut next = prev.clone();
    for key in schema.keys() {
        if !rng.gen_bool(churn) {
            continue;
        }
        if prev.get(&key).is_some() && rng.gen_bool(0.4) {
            next.remove(&key);
        } else {
            next.set(key, random_value(rng));
        }
    }
    (prev, next)
}

pub fn random_lev<R: Rng>(rng: &mut R, schema: &Schema) -> LevSpan {
    let p = rng.gen_range(0.0..=1.0);
    let mut edits: Vec<(SlotKey, EditValue)> = Vec::new();
    for k in schema.keys() {
        if !rng.gen_bool(p) {
            continue;
        }
        let v = if rng.gen_bool(0.2) {
            EditValue::Delete
        } else {
            EditValue::Set(random_value(rng))
        };
        edits.push((k, v));
    }
    LevSpan::from_edits(edits, schema).unwrap()
}

/// Lev text written straight from the per-key rules: insert or substitute
/// writes the new value, delete writes `NULL`, unchanged keys write nothing.
pub fn brute_force_lev(prev: &DialogueState, next: &DialogueState, schema: &Schema) -> (String, usize) {
    let mut out = vec!["<SOB>".to_string()];
    let mut edits = 0;
    for d in schema.domains() {
        let mut block = Vec::new();
        for s in &d.slots {
            let key = SlotKey::new(&d.name, s);
            let token = match (prev.get(&key), next.get(&key)) {
                (None, Some(v)) => Some(v.as_str().to_string()),
                (Some(a), Some(b)) if a != b => Some(b.as_str().to_string()),
                (Some(_), None) => Some("NULL".to_string()),
                _ => None,
            };
            if let Some(t) = token {
                block.push(s.clone());
                block.push(t);
                edits += 1;
            }
        }
        if !block.is_empty() {
            out.push(format!("[{}]", d.name));
            out.extend(block);
        }
    }
    out.push("<EOB>".to_string());
    (out.join(" "), edits)
}

/// Random bytes, or a soup of grammar tokens, schema names and words.
pub fn fuzz_text<R: Rng>(rng: &mut R, schema: &Schema) -> String {
    if rng.gen_bool(0.5) {
        let bytes: Vec<u8> = (0..rng.gen_range(0..200)).map(|_| rng.gen()).collect();
        return String::from_utf8_lossy(&bytes).into_owned();
    }
    let mut pool: Vec<String> = ["<SOB>", "<EOB>", "<EOU>", "<EOR>", "NULL", "<KB3>", "[", "]", "[]", "[spa]", "  ", "\n"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    pool.extend(WORDS.iter().map(|s| s.to_string()));
    for d in schema.domains() {
        pool.push(format!("[{}]", d.name));
        pool.extend(d.slots.iter().cloned());
    }
    let n = rng.gen_range(0..60);
    (0..n).map(|_| pool.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
}
