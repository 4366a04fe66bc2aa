mod common;

use common::*;
use mintl::codec::target_token_count;
use mintl::kb::{categorize_kb_state, is_dont_care, lexicalize, query, KnowledgeBase, LexContext};
use mintl::metrics::{combined_score, corpus_bleu, joint_goal_accuracy};
use mintl::state::{normalize_value, BookingOutcome, PipelineConfig};
use mintl::{
    apply_lev, compute_lev, edit_count, parse_full_state, parse_lev, serialize_full_state, serialize_lev, DomainSpec,
    Schema, SlotKey,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #[test]
    fn patch_inverts_diff(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = random_schema(&mut r);
        let (prev, next) = random_pair(&mut r, &schema);
        let lev = compute_lev(&prev, &next, &schema).unwrap();
        prop_assert_eq!(apply_lev(&prev, &lev, &schema).unwrap(), next.clone());
        prop_assert_eq!(compute_lev(&prev, &next, &schema).unwrap(), lev);
    }

    #[test]
    fn diff_is_the_per_key_diff(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = random_schema(&mut r);
        let (prev, next) = random_pair(&mut r, &schema);
        let lev = compute_lev(&prev, &next, &schema).unwrap();
        let (expected, differing) = brute_force_lev(&prev, &next, &schema);
        prop_assert_eq!(serialize_lev(&lev), expected);
        prop_assert_eq!(edit_count(&lev), differing);
    }

    #[test]
    fn patching_twice_changes_nothing(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = random_schema(&mut r);
        let prev = random_state(&mut r, &schema, 0.5);
        let lev = random_lev(&mut r, &schema);
        let once = apply_lev(&prev, &lev, &schema).unwrap();
        prop_assert_eq!(apply_lev(&once, &lev, &schema).unwrap(), once);
    }

    #[test]
    fn self_diff_is_empty(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = random_schema(&mut r);
        let s = random_state(&mut r, &schema, 0.6);
        prop_assert!(compute_lev(&s, &s, &schema).unwrap().is_empty());
    }

    #[test]
    fn lev_codec_round_trips(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = random_schema(&mut r);
        let lev = random_lev(&mut r, &schema);
        let report = parse_lev(&serialize_lev(&lev), &schema);
        prop_assert!(report.is_clean(), "{:?}", report.diagnostics);
        prop_assert_eq!(report.value, lev);
    }

    #[test]
    fn state_codec_round_trips(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = random_schema(&mut r);
        let density = r.gen_range(0.0..=1.0);
        let state = random_state(&mut r, &schema, density);
        let report = parse_full_state(&serialize_full_state(&state, &schema), &schema);
        prop_assert!(report.is_clean(), "{:?}", report.diagnostics);
        prop_assert_eq!(report.value, state);
    }

    #[test]
    fn distinct_spans_serialize_differently(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = random_schema(&mut r);
        let a = random_lev(&mut r, &schema);
        let b = random_lev(&mut r, &schema);
        prop_assert_eq!(a == b, serialize_lev(&a) == serialize_lev(&b));
    }

    #[test]
    fn parsing_is_total(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = random_schema(&mut r);
        let text = fuzz_text(&mut r, &schema);
        let lev = parse_lev(&text, &schema);
        let state = parse_full_state(&text, &schema);
        // Whatever survives is schema-valid and re-serializes cleanly.
        prop_assert!(parse_lev(&serialize_lev(&lev.value), &schema).is_clean());
        prop_assert!(apply_lev(&mintl::DialogueState::new(), &lev.value, &schema).is_ok());
        prop_assert!(mintl::state::validate_state(&state.value, &schema).is_ok());
        prop_assert!(parse_full_state(&serialize_full_state(&state.value, &schema), &schema).is_clean());
        // Dropped text is always reported.
        let kept = target_token_count(&serialize_lev(&lev.value)) - 2;
        let given = text.split_whitespace().filter(|t| *t != "<SOB>" && *t != "<EOB>").count();
        if kept < given && !text.split_whitespace().any(|t| t == "NULL") {
            prop_assert!(!lev.diagnostics.is_empty(), "{text:?}");
        }
    }

    #[test]
    fn lev_never_longer_than_full_span_without_deletions(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = random_schema(&mut r);
        let (prev, mut next) = random_pair(&mut r, &schema);
        for (k, v) in prev.iter() {
            if next.get(k).is_none() {
                next.set(k.clone(), v.clone());
            }
        }
        let lev = target_token_count(&serialize_lev(&compute_lev(&prev, &next, &schema).unwrap()));
        let full = target_token_count(&serialize_full_state(&next, &schema));
        prop_assert!(lev <= full + 2);
        let unchanged = prev.iter().filter(|(k, v)| next.get(k) == Some(*v)).count();
        if unchanged >= 2 {
            prop_assert!(lev < full, "lev {lev} full {full} unchanged {unchanged}");
        }
    }

    #[test]
    fn query_is_a_filtered_scan(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = Schema::new(vec![DomainSpec::new("hotel", &["area", "stars", "type", "people"]).booking(&["people"])]).unwrap();
        let pick = |r: &mut ChaCha8Rng, xs: &[&str]| xs[r.gen_range(0..xs.len())].to_string();
        let rows: Vec<serde_json::Value> = (0..r.gen_range(0..30))
            .map(|i| serde_json::json!({
                "name": format!("h{i}"),
                "area": pick(&mut r, &["north", "south", "Centre"]),
                "stars": pick(&mut r, &["3", "4"]),
                "type": pick(&mut r, &["hotel", "guest house"]),
            }))
            .collect();
        let mut kb = KnowledgeBase::empty();
        kb.add_table("hotel", &serde_json::Value::from(rows).to_string(), "h.json", &schema).unwrap();

        let mut state = mintl::DialogueState::new();
        let mut last = kb.table("hotel").len();
        let slots = [("area", &["north", "south", "centre", "dontcare"][..]), ("stars", &["3", "4", "5"]), ("type", &["hotel", "guest house"]), ("people", &["2"])];
        for (slot, values) in slots {
            if r.gen_bool(0.3) {
                continue;
            }
            state.set(SlotKey::new("hotel", slot), mintl::Value::new(&pick(&mut r, values)).unwrap());
            let got: Vec<usize> = query(&kb, &state, "hotel", &schema).iter().map(|e| e.index).collect();
            let scan: Vec<usize> = kb
                .table("hotel")
                .iter()
                .filter(|e| state.domain_entries("hotel").all(|(s, v)| {
                    s == "people" || is_dont_care(v.as_str()) || e.get(s).map(normalize_value).as_deref() == Some(v.as_str())
                }))
                .map(|e| e.index)
                .collect();
            prop_assert_eq!(&got, &scan);
            prop_assert!(got.len() <= last);
            last = got.len();
        }
    }

    #[test]
    fn lexicalize_only_substitutes(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = Schema::new(vec![DomainSpec::new("hotel", &["name", "area"]).requestable(&["phone"])]).unwrap();
        let mut kb = KnowledgeBase::empty();
        kb.add_table("hotel", r#"[{"name": "acorn guest house", "area": "north", "phone": "01223"}]"#, "h", &schema).unwrap();
        let entities = query(&kb, &mintl::DialogueState::new(), "hotel", &schema);
        let words = ["[value_name]", "[value_area]", "[value_phone]", "[value_choice]", "[value_reference]", "[value_spa]", "is", "in", "the", "."];
        let delex: Vec<&str> = (0..r.gen_range(0..15)).map(|_| words[r.gen_range(0..words.len())]).collect();
        let delex = delex.join(" ");
        let state = mintl::DialogueState::new().with("hotel", "area", "north");
        let ctx = LexContext { domain: Some("hotel"), entities: &entities, state: &state, reference: Some("ABCD1234") };
        let lex = lexicalize(&delex, &ctx);
        prop_assert_eq!(lex.skeleton(), delex);
    }

    #[test]
    fn combined_is_monotone(i in 0.0f64..100.0, s in 0.0f64..100.0, b in 0.0f64..100.0, d in 0.05f64..10.0) {
        let base = combined_score(i, s, b);
        prop_assert!(combined_score(i + d, s, b) > base);
        prop_assert!(combined_score(i, s + d, b) > base);
        prop_assert!(combined_score(i, s, b + d) > base);
    }

    #[test]
    fn self_comparisons_are_perfect(seed in any::<u64>()) {
        let mut r = rng(seed);
        let schema = random_schema(&mut r);
        let states: Vec<_> = (0..r.gen_range(1..10)).map(|_| random_state(&mut r, &schema, 0.5)).collect();
        prop_assert_eq!(joint_goal_accuracy(&states, &states).unwrap().joint_accuracy, 1.0);
        let text: Vec<String> = (0..r.gen_range(1..6))
            .map(|_| (0..r.gen_range(4..12)).map(|_| random_value(&mut r).to_string()).collect::<Vec<_>>().join(" "))
            .collect();
        prop_assert!((corpus_bleu(&text, &text).unwrap() - 100.0).abs() < 1e-9);
    }
}

#[test]
fn a_deletion_can_exceed_the_full_span() {
    let schema = Schema::new(vec![DomainSpec::new("hotel", &["area"])]).unwrap();
    let prev = mintl::DialogueState::new().with("hotel", "area", "north");
    let next = mintl::DialogueState::new();
    let lev = serialize_lev(&compute_lev(&prev, &next, &schema).unwrap());
    assert_eq!(lev, "<SOB> [hotel] area NULL <EOB>");
    assert!(target_token_count(&lev) > target_token_count(&serialize_full_state(&next, &schema)) + 2);
}

#[test]
fn kb_states_cover_all_fifteen() {
    let cfg = PipelineConfig::multiwoz(2, 0).unwrap();
    for (domain, t2) in [("train", 3usize), ("hotel", 10)] {
        let mut seen = std::collections::BTreeSet::new();
        for count in std::iter::once(None).chain((0..=t2 + 1).map(Some)) {
            for b in [BookingOutcome::None, BookingOutcome::Fail, BookingOutcome::Success] {
                seen.insert(categorize_kb_state(count, b, domain, &cfg).unwrap().index());
            }
        }
        assert_eq!(seen, (1..=15).collect());
    }
}
