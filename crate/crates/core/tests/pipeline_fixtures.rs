mod common;

use common::{fixture, read_json};
use mintl::corpus::{convert_multiwoz, load_corpus, Corpus};
use mintl::kb::KnowledgeBase;
use mintl::pipeline::{
    bench_not_latency, evaluate_dst, evaluate_e2e, run_dialogue, run_turn, DialogueRun, Env, Generator, GeneratorError,
    GoldOracle, NoisyOracle, RunOptions, TargetMode, TurnInput, TurnKey,
};
use mintl::state::PipelineConfig;
use mintl::{parse_full_state, DialogueState};

fn excerpt() -> (Corpus, KnowledgeBase) {
    let text = std::fs::read_to_string(fixture("multiwoz_excerpt/data_for_damd.json")).unwrap();
    let (corpus, warnings) = convert_multiwoz(&text).unwrap();
    assert!(warnings.is_empty(), "{warnings:?}");
    let kb = KnowledgeBase::load_dir(&fixture("multiwoz_excerpt/db"), &corpus.schema).unwrap();
    (corpus, kb)
}

fn synthetic() -> (Corpus, KnowledgeBase) {
    let corpus = load_corpus(&fixture("synthetic/corpus.json")).unwrap();
    let kb = KnowledgeBase::load_dir(&fixture("synthetic/kb"), &corpus.schema).unwrap();
    (corpus, kb)
}

fn run_all(corpus: &Corpus, g: &mut dyn Generator, env: Env, mode: TargetMode) -> Vec<DialogueRun> {
    let opts = RunOptions { mode, ..Default::default() };
    corpus.dialogues.iter().map(|d| run_dialogue(d, g, env, opts).unwrap()).collect()
}

fn check_gold_eval(corpus: &Corpus, kb: &KnowledgeBase, expected: serde_json::Value) {
    let cfg = PipelineConfig::multiwoz(2, 0).unwrap();
    let env = Env { kb, schema: &corpus.schema, cfg: &cfg };
    for mode in [TargetMode::Lev, TargetMode::FullSpan] {
        let mut g = GoldOracle::new(&corpus.dialogues, &corpus.schema, mode).unwrap();
        let runs = run_all(corpus, &mut g, env, mode);
        let report = evaluate_e2e(&corpus.dialogues, &runs, kb, &corpus.schema).unwrap();
        let got: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(got, expected, "{mode:?}");
    }
}

#[test]
fn party_of_ten_turn_through_the_loop() {
    let corpus = load_corpus(&fixture("party_of_ten/corpus.json")).unwrap();
    let kb = KnowledgeBase::load_dir(&fixture("party_of_ten/kb"), &corpus.schema).unwrap();
    let cfg = PipelineConfig::multiwoz(1, 0).unwrap();
    let env = Env { kb: &kb, schema: &corpus.schema, cfg: &cfg };
    let d = &corpus.dialogues[0];
    let history: Vec<(String, String)> = d.turns[..2]
        .iter()
        .map(|t| (t.user_utterance.clone(), t.gold_delex_response.clone()))
        .collect();
    let mut g = GoldOracle::new(&corpus.dialogues, &corpus.schema, TargetMode::Lev).unwrap();
    let input = TurnInput {
        dialogue: d,
        turn: 3,
        prev_state: &d.turns[1].gold_state,
        prev_active: Some("hotel"),
        history: &history,
    };
    let trace = run_turn(&input, &mut g, env, TargetMode::Lev).unwrap();
    assert_eq!(
        trace.encoded_input,
        "[hotel] stars 5 area centre day sunday [restaurant] food thai area centre day sunday name bangkok city <EOB> \
         Can you help me book a 5 star hotel near the restaurant on the same day? <EOU> For how many people? <EOR> \
         10 people <EOU>"
    );
    assert_eq!(trace.raw_state_output, "<SOB> [hotel] people 10 <EOB>");
    assert_eq!(trace.match_count, Some(0));
    assert_eq!(trace.kb_state.to_string(), "KB2");
    assert_eq!(trace.raw_response, "sorry, there are no matches. would you like to try another part of town?");
    assert_eq!(trace.state, d.turns[2].gold_state);
}

#[test]
fn party_of_ten_belief_text_is_the_gold_state() {
    let corpus = load_corpus(&fixture("party_of_ten/corpus.json")).unwrap();
    let text = "[hotel] stars 5 area centre day sunday [restaurant] food thai area centre day sunday name bangkok city";
    let parsed = parse_full_state(text, &corpus.schema);
    assert!(parsed.is_clean());
    assert_eq!(parsed.value, corpus.dialogues[0].turns[1].gold_state);
}

#[test]
fn mul0113_shortens_the_stay() {
    let (corpus, kb) = excerpt();
    let cfg = PipelineConfig::multiwoz(2, 0).unwrap();
    let env = Env { kb: &kb, schema: &corpus.schema, cfg: &cfg };
    let d = corpus.dialogues.iter().find(|d| d.id == "mul0113").unwrap();
    let mut g = GoldOracle::new(&corpus.dialogues, &corpus.schema, TargetMode::Lev).unwrap();
    let run = run_dialogue(d, &mut g, env, RunOptions::default()).unwrap();
    let t5 = &run.traces[4];
    let t6 = &run.traces[5];
    assert_eq!(t5.state.lookup("hotel", "stay").unwrap().as_str(), "2");
    assert_eq!(t6.raw_state_output, "<SOB> [hotel] stay 1 <EOB>");
    assert_eq!(t6.state.lookup("hotel", "stay").unwrap().as_str(), "1");
    assert_eq!(t5.kb_state.to_string(), "KB8");
    assert_eq!(t6.kb_state.to_string(), "KB13");
    assert_eq!(run.traces[0].raw_state_output, "<SOB> [restaurant] food indian pricerange expensive <EOB>");
}

#[test]
fn gold_self_evaluation_synthetic() {
    let (corpus, kb) = synthetic();
    assert!(corpus.dialogues.len() >= 20);
    check_gold_eval(&corpus, &kb, read_json("synthetic/gold_eval.json"));
}

#[test]
fn gold_self_evaluation_excerpt() {
    let (corpus, kb) = excerpt();
    check_gold_eval(&corpus, &kb, read_json("multiwoz_excerpt/gold_eval.json"));
}

#[test]
fn lev_targets_are_shorter() {
    for (corpus, factor) in [(synthetic().0, 0.5), (excerpt().0, 1.0)] {
        let kb = KnowledgeBase::empty();
        let cfg = PipelineConfig::multiwoz(2, 0).unwrap();
        let env = Env { kb: &kb, schema: &corpus.schema, cfg: &cfg };
        let not = |mode| {
            let mut g = GoldOracle::new(&corpus.dialogues, &corpus.schema, mode).unwrap();
            bench_not_latency(&corpus.dialogues, &mut g, env, mode).unwrap().not
        };
        let (lev, full) = (not(TargetMode::Lev), not(TargetMode::FullSpan));
        assert!(lev < factor * full, "lev {lev} full {full}");
    }
}

#[test]
fn bench_not_is_the_mean_gold_lev_length() {
    let (corpus, _) = excerpt();
    let kb = KnowledgeBase::empty();
    let cfg = PipelineConfig::multiwoz(2, 0).unwrap();
    let env = Env { kb: &kb, schema: &corpus.schema, cfg: &cfg };
    let mut g = GoldOracle::new(&corpus.dialogues, &corpus.schema, TargetMode::Lev).unwrap();
    let report = bench_not_latency(&corpus.dialogues, &mut g, env, TargetMode::Lev).unwrap();
    let mut tokens = 0;
    let mut turns = 0;
    for d in &corpus.dialogues {
        let mut prev = DialogueState::new();
        for t in &d.turns {
            let lev = mintl::compute_lev(&prev, &t.gold_state, &corpus.schema).unwrap();
            tokens += mintl::serialize_lev(&lev).split(' ').count();
            turns += 1;
            prev = t.gold_state.clone();
        }
    }
    assert_eq!(report.turns, turns);
    assert_eq!(report.not, tokens as f64 / turns as f64);
}

#[test]
fn noise_free_oracle_is_the_gold_oracle() {
    let (corpus, kb) = synthetic();
    let cfg = PipelineConfig::multiwoz(3, 0).unwrap();
    let env = Env { kb: &kb, schema: &corpus.schema, cfg: &cfg };
    let view = |runs: Vec<DialogueRun>| -> Vec<(String, String, DialogueState, String)> {
        runs.into_iter()
            .flat_map(|r| r.traces)
            .map(|t| (t.encoded_input, t.raw_state_output, t.state, t.lexicalized_response))
            .collect()
    };
    let mut gold = GoldOracle::new(&corpus.dialogues, &corpus.schema, TargetMode::Lev).unwrap();
    let mut clean = NoisyOracle::new(&corpus.dialogues, &corpus.schema, 0.0, 99).unwrap();
    assert_eq!(
        view(run_all(&corpus, &mut gold, env, TargetMode::Lev)),
        view(run_all(&corpus, &mut clean, env, TargetMode::Lev))
    );
}

/// Gold, except for one turn whose span is replaced.
struct OneBadTurn {
    gold: GoldOracle,
    dialogue: String,
    turn: usize,
}

impl Generator for OneBadTurn {
    fn state_request(&mut self, key: TurnKey, encoded: &str) -> Result<String, GeneratorError> {
        if key.dialogue_id == self.dialogue && key.turn == self.turn {
            return Ok("<SOB> [hotel] area NULL stars 1 <EOB>".into());
        }
        self.gold.state_request(key, encoded)
    }

    fn response_request(&mut self, key: TurnKey, encoded: &str, kb: mintl::kb::KbState) -> Result<String, GeneratorError> {
        self.gold.response_request(key, encoded, kb)
    }
}

#[test]
fn corruption_never_reaches_back() {
    let (corpus, kb) = synthetic();
    let cfg = PipelineConfig::multiwoz(2, 0).unwrap();
    let env = Env { kb: &kb, schema: &corpus.schema, cfg: &cfg };
    for d in corpus.dialogues.iter().filter(|d| d.id.starts_with("syn-hotel")) {
        for bad in 1..=d.turns.len() {
            let mut g = OneBadTurn {
                gold: GoldOracle::new(&corpus.dialogues, &corpus.schema, TargetMode::Lev).unwrap(),
                dialogue: d.id.clone(),
                turn: bad,
            };
            let run = run_dialogue(d, &mut g, env, RunOptions::default()).unwrap();
            let hits: Vec<bool> = run.traces.iter().zip(&d.turns).map(|(t, g)| t.state == g.gold_state).collect();
            assert!(hits[..bad - 1].iter().all(|h| *h), "{} turn {bad}: {hits:?}", d.id);
            assert!(!hits[bad - 1], "{} turn {bad}", d.id);
        }
    }
}

#[test]
fn noisy_accuracy_falls_with_p() {
    let (corpus, _) = synthetic();
    let kb = KnowledgeBase::empty();
    let cfg = PipelineConfig::multiwoz(3, 0).unwrap();
    let env = Env { kb: &kb, schema: &corpus.schema, cfg: &cfg };
    let mean = |p: f64| {
        (0..20u64)
            .map(|seed| {
                let mut g = NoisyOracle::new(&corpus.dialogues, &corpus.schema, p, seed).unwrap();
                let runs = run_all(&corpus, &mut g, env, TargetMode::Lev);
                evaluate_dst(&corpus.dialogues, &runs).unwrap().joint_acc.unwrap()
            })
            .sum::<f64>()
            / 20.0
    };
    let curve: Vec<f64> = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0].into_iter().map(mean).collect();
    assert_eq!(curve[0], 1.0);
    assert!(curve.windows(2).all(|w| w[1] <= w[0]), "{curve:?}");
    assert!(curve[5] < 0.5);
}

#[test]
fn excerpt_dump_then_load_is_identity() {
    let (corpus, _) = excerpt();
    let back = Corpus::from_json(&corpus.to_json()).unwrap();
    assert_eq!(back.dialogues, corpus.dialogues);
    assert_eq!(back.to_json(), corpus.to_json());
}
