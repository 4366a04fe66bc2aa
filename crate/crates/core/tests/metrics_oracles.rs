mod common;

use common::{fixture, read_json};
use mintl::corpus::load_corpus;
use mintl::kb::KnowledgeBase;
use mintl::metrics::{corpus_bleu, inform_success};
use mintl::pipeline::{evaluate_e2e, run_dialogue, Env, NoisyOracle, RunOptions};
use mintl::state::PipelineConfig;

fn strings(v: &serde_json::Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

#[test]
fn bleu_matches_the_hand_count() {
    let f = read_json("bleu/five_pairs.json");
    let bleu = corpus_bleu(&strings(&f["candidates"]), &strings(&f["references"])).unwrap();
    assert_eq!((bleu * 1e4).round() / 1e4, f["bleu"].as_f64().unwrap());

    let matches: Vec<f64> = f["clipped_matches"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let totals: Vec<f64> = f["candidate_ngrams"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let (c, r) = (f["candidate_length"].as_f64().unwrap(), f["reference_length"].as_f64().unwrap());
    let log_p: f64 = matches.iter().zip(&totals).map(|(m, t)| (m / t).ln()).sum::<f64>() / 4.0;
    let from_counts = 100.0 * ((1.0 - r / c).min(0.0) + log_p).exp();
    assert!((bleu - from_counts).abs() < 1e-9, "{bleu} vs {from_counts}");
}

#[test]
fn halving_candidates_lowers_bleu() {
    let f = read_json("bleu/five_pairs.json");
    let refs = strings(&f["references"]);
    let halves: Vec<String> = refs
        .iter()
        .map(|s| {
            let toks: Vec<&str> = s.split(' ').collect();
            toks[..toks.len().div_ceil(2)].join(" ")
        })
        .collect();
    let full = corpus_bleu(&refs, &refs).unwrap();
    let half = corpus_bleu(&halves, &refs).unwrap();
    assert!(half < full, "{half} vs {full}");
}

#[test]
fn success_never_exceeds_inform() {
    let corpus = load_corpus(&fixture("synthetic/corpus.json")).unwrap();
    let kb = KnowledgeBase::load_dir(&fixture("synthetic/kb"), &corpus.schema).unwrap();
    let cfg = PipelineConfig::multiwoz(2, 0).unwrap();
    let env = Env { kb: &kb, schema: &corpus.schema, cfg: &cfg };
    for seed in 0..10 {
        let mut g = NoisyOracle::new(&corpus.dialogues, &corpus.schema, 0.3, seed).unwrap();
        let runs: Vec<_> = corpus
            .dialogues
            .iter()
            .map(|d| run_dialogue(d, &mut g, env, RunOptions::default()).unwrap())
            .collect();
        let outputs: Vec<_> = runs.iter().map(|r| r.output()).collect();
        let is = inform_success(&corpus.dialogues, &outputs, &kb, &corpus.schema).unwrap();
        for v in &is.per_dialogue {
            assert!(!v.successful || v.informed);
        }
        assert!(is.success <= is.inform);

        // Shuffling dialogue order changes nothing.
        let mut order: Vec<usize> = (0..corpus.dialogues.len()).collect();
        order.reverse();
        let dialogues: Vec<_> = order.iter().map(|i| corpus.dialogues[*i].clone()).collect();
        let reversed: Vec<_> = order.iter().map(|i| runs[*i].clone()).collect();
        let a = evaluate_e2e(&corpus.dialogues, &runs, &kb, &corpus.schema).unwrap();
        let b = evaluate_e2e(&dialogues, &reversed, &kb, &corpus.schema).unwrap();
        assert_eq!(a.inform, b.inform);
        assert_eq!(a.success, b.success);
        assert_eq!(a.joint_acc, b.joint_acc);
    }
}
