//! The generator contract and the per-turn loop.
//!
//! Each turn makes two generator calls on the same encoded context
//! (`B_{t-1} <EOB> U <EOU> R <EOR> ... U_t <EOU>`): one for the belief
//! update and one for the delexicalized response, which is conditioned on
//! the KB state computed in between.

mod external;
mod oracle;
mod spec;

use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::codec::{encode_context, parse_full_state, parse_lev, target_token_count, ContextError, Diagnostic};
use crate::kb::{
    attempt_booking, categorize_kb_state, lexicalize, query, reference_number, KbError, KbState, KnowledgeBase,
    LexContext,
};
use crate::lev::{active_domain, apply_lev, LevSpan};
use crate::metrics::{
    combined_score, corpus_bleu, inform_success, joint_goal_accuracy, DialogueOutput, MetricError, Report,
};
use crate::state::{window_from_history, BookingOutcome, Dialogue, DialogueState, PipelineConfig, Schema};

pub use external::{
    run_conformance, serve, CheckStatus, ConformanceCheck, ConformanceReport, ExternalGenerator, FrameKind,
    RecordingGenerator, ReplayEntry, ReplyFrame, RequestFrame, Responder, ServeFault,
};
pub use oracle::{GoldOracle, NoisyOracle};
pub use spec::GeneratorSpec;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("no reply within {0:?}")]
    Timeout(Duration),
    #[error("malformed reply `{frame}`: {reason}")]
    MalformedReply { frame: String, reason: String },
    #[error("generator closed the stream")]
    Closed,
    #[error("no recorded output for dialogue {dialogue} turn {turn}")]
    UnknownTurn { dialogue: String, turn: usize },
    #[error("invalid generator spec {spec:?}: {reason}")]
    BadSpec { spec: String, reason: String },
}

impl GeneratorError {
    /// True for failures of the channel rather than of the content.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            GeneratorError::Transport(_)
                | GeneratorError::Timeout(_)
                | GeneratorError::MalformedReply { .. }
                | GeneratorError::Closed
        )
    }
}

/// Identifies the turn a request belongs to. `turn` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnKey<'a> {
    pub dialogue_id: &'a str,
    pub turn: usize,
}

/// The two requests a generator must answer.
///
/// In-process generators may use `key`; external ones only see the encoded
/// text (and KB state).
pub trait Generator {
    /// Belief update text for the encoded context.
    fn state_request(&mut self, key: TurnKey, encoded: &str) -> Result<String, GeneratorError>;

    /// Delexicalized response for the same context under `kb_state`.
    fn response_request(&mut self, key: TurnKey, encoded: &str, kb_state: KbState) -> Result<String, GeneratorError>;
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn state_request(&mut self, key: TurnKey, encoded: &str) -> Result<String, GeneratorError> {
        (**self).state_request(key, encoded)
    }

    fn response_request(&mut self, key: TurnKey, encoded: &str, kb_state: KbState) -> Result<String, GeneratorError> {
        (**self).response_request(key, encoded, kb_state)
    }
}

impl<G: Generator + ?Sized> Generator for &mut G {
    fn state_request(&mut self, key: TurnKey, encoded: &str) -> Result<String, GeneratorError> {
        (**self).state_request(key, encoded)
    }

    fn response_request(&mut self, key: TurnKey, encoded: &str, kb_state: KbState) -> Result<String, GeneratorError> {
        (**self).response_request(key, encoded, kb_state)
    }
}

/// What the state request is expected to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMode {
    /// A Levenshtein span applied to the previous state.
    #[default]
    Lev,
    /// The complete state, replacing the previous one.
    FullSpan,
}

impl std::str::FromStr for TargetMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lev" => Ok(TargetMode::Lev),
            "full_span" => Ok(TargetMode::FullSpan),
            _ => Err(format!("unknown mode {s:?}, expected lev or full_span")),
        }
    }
}

/// Source of the system turns in the context window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HistoryMode {
    #[default]
    Generated,
    Gold,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub mode: TargetMode,
    pub history: HistoryMode,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("dialogue {dialogue} turn {turn}: {source}")]
    Generator {
        dialogue: String,
        turn: usize,
        #[source]
        source: GeneratorError,
    },
    #[error("dialogue {dialogue} turn {turn}: {source}")]
    Context {
        dialogue: String,
        turn: usize,
        #[source]
        source: ContextError,
    },
    #[error("dialogue {dialogue} turn {turn}: {source}")]
    Kb {
        dialogue: String,
        turn: usize,
        #[source]
        source: KbError,
    },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub encode: Duration,
    pub state_generation: Duration,
    pub update: Duration,
    pub kb: Duration,
    pub response_generation: Duration,
}

impl StageTimings {
    pub fn generator(&self) -> Duration {
        self.state_generation + self.response_generation
    }

    pub fn overhead(&self) -> Duration {
        self.encode + self.update + self.kb
    }

    pub fn total(&self) -> Duration {
        self.generator() + self.overhead()
    }
}

/// Everything one turn produced, in dataflow order.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnTrace {
    pub turn: usize,
    pub encoded_input: String,
    pub raw_state_output: String,
    /// The parsed span in [`TargetMode::Lev`].
    pub span: Option<LevSpan>,
    pub diagnostics: Vec<Diagnostic>,
    pub state: DialogueState,
    pub active_domain: Option<String>,
    /// `None` when no query was possible.
    pub match_count: Option<usize>,
    pub booking: BookingOutcome,
    pub kb_state: KbState,
    pub raw_response: String,
    pub lexicalized_response: String,
    pub input_tokens: usize,
    pub state_tokens: usize,
    pub response_tokens: usize,
    pub timings: StageTimings,
}

/// Inputs of one turn besides the generator.
pub struct TurnInput<'a> {
    pub dialogue: &'a Dialogue,
    /// 1-based.
    pub turn: usize,
    pub prev_state: &'a DialogueState,
    pub prev_active: Option<&'a str>,
    /// Completed `(user, system)` pairs before this turn.
    pub history: &'a [(String, String)],
}

/// Shared read-only environment of a run.
#[derive(Clone, Copy)]
pub struct Env<'a> {
    pub kb: &'a KnowledgeBase,
    pub schema: &'a Schema,
    pub cfg: &'a PipelineConfig,
}

fn kb_state_none() -> KbState {
    KbState::new(1).expect("KB1 exists")
}

pub fn run_turn<G: Generator + ?Sized>(
    input: &TurnInput,
    generator: &mut G,
    env: Env,
    mode: TargetMode,
) -> Result<TurnTrace, PipelineError> {
    let dialogue = &input.dialogue.id;
    let turn = input.turn;
    let gold_turn = &input.dialogue.turns[turn - 1];
    let key = TurnKey {
        dialogue_id: dialogue,
        turn,
    };
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let window = window_from_history(input.history, &gold_turn.user_utterance, env.cfg.window());
    let encoded = encode_context(input.prev_state, &window, env.schema).map_err(|source| PipelineError::Context {
        dialogue: dialogue.clone(),
        turn,
        source,
    })?;
    timings.encode = clock.elapsed();

    let gen_err = |source| PipelineError::Generator {
        dialogue: dialogue.clone(),
        turn,
        source,
    };
    let clock = Instant::now();
    let raw_state_output = generator.state_request(key, &encoded).map_err(gen_err)?;
    timings.state_generation = clock.elapsed();

    let clock = Instant::now();
    let (span, diagnostics, state) = match mode {
        TargetMode::Lev => {
            let report = parse_lev(&raw_state_output, env.schema);
            let state =
                apply_lev(input.prev_state, &report.value, env.schema).expect("parsed spans only hold schema keys");
            (Some(report.value), report.diagnostics, state)
        }
        TargetMode::FullSpan => {
            let report = parse_full_state(&raw_state_output, env.schema);
            (None, report.diagnostics, report.value)
        }
    };
    let active = active_domain(input.prev_state, &state, input.prev_active, env.schema);
    timings.update = clock.elapsed();

    let clock = Instant::now();
    let mut entities = Vec::new();
    let mut match_count = None;
    let mut booking = BookingOutcome::None;
    let mut kb_state = kb_state_none();
    if let Some(domain) = active.as_deref() {
        if env.kb.has_table(domain) && env.schema.domain(domain).is_some_and(|d| d.has_db) {
            entities = query(env.kb, &state, domain, env.schema);
            match_count = Some(entities.len());
        }
        booking = attempt_booking(dialogue, gold_turn, &state, domain, env.schema, env.cfg);
        kb_state = categorize_kb_state(match_count, booking, domain, env.cfg).map_err(|source| PipelineError::Kb {
            dialogue: dialogue.clone(),
            turn,
            source,
        })?;
    }
    timings.kb = clock.elapsed();

    let clock = Instant::now();
    let raw_response = generator.response_request(key, &encoded, kb_state).map_err(gen_err)?;
    timings.response_generation = clock.elapsed();

    let reference = match (&active, booking) {
        (Some(d), BookingOutcome::Success) => Some(reference_number(env.cfg.rng_seed, dialogue, turn, d)),
        _ => None,
    };
    let lexicalized_response = lexicalize(
        &raw_response,
        &LexContext {
            domain: active.as_deref(),
            entities: &entities,
            state: &state,
            reference: reference.as_deref(),
        },
    )
    .text;

    Ok(TurnTrace {
        turn,
        input_tokens: target_token_count(&encoded),
        state_tokens: target_token_count(&raw_state_output),
        response_tokens: target_token_count(&raw_response),
        encoded_input: encoded,
        raw_state_output,
        span,
        diagnostics,
        state,
        active_domain: active,
        match_count,
        booking,
        kb_state,
        raw_response,
        lexicalized_response,
        timings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueRun {
    pub dialogue_id: String,
    pub traces: Vec<TurnTrace>,
}

impl DialogueRun {
    pub fn states(&self) -> Vec<DialogueState> {
        self.traces.iter().map(|t| t.state.clone()).collect()
    }

    pub fn output(&self) -> DialogueOutput {
        DialogueOutput {
            responses: self.traces.iter().map(|t| t.raw_response.clone()).collect(),
            states: self.states(),
        }
    }
}

/// Runs every turn, threading the predicted state from turn to turn.
pub fn run_dialogue<G: Generator + ?Sized>(
    dialogue: &Dialogue,
    generator: &mut G,
    env: Env,
    opts: RunOptions,
) -> Result<DialogueRun, PipelineError> {
    let mut state = DialogueState::new();
    let mut active: Option<String> = None;
    let mut history: Vec<(String, String)> = Vec::with_capacity(dialogue.turns.len());
    let mut traces = Vec::with_capacity(dialogue.turns.len());
    for (i, gold) in dialogue.turns.iter().enumerate() {
        let trace = run_turn(
            &TurnInput {
                dialogue,
                turn: i + 1,
                prev_state: &state,
                prev_active: active.as_deref(),
                history: &history,
            },
            generator,
            env,
            opts.mode,
        )?;
        let system = match opts.history {
            HistoryMode::Generated => trace.raw_response.clone(),
            HistoryMode::Gold => gold.gold_delex_response.clone(),
        };
        history.push((gold.user_utterance.clone(), system));
        state = trace.state.clone();
        active = trace.active_domain.clone();
        traces.push(trace);
    }
    Ok(DialogueRun {
        dialogue_id: dialogue.id.clone(),
        traces,
    })
}

pub type BoxedGenerator = Box<dyn Generator + Send>;

/// Runs dialogues on `jobs` workers, each with its own generator from
/// `make`. Results keep input order.
pub fn run_corpus<F>(
    dialogues: &[Dialogue],
    make: F,
    env: Env,
    opts: RunOptions,
    jobs: usize,
) -> Result<Vec<DialogueRun>, PipelineError>
where
    F: Fn() -> Result<BoxedGenerator, GeneratorError> + Sync,
{
    let jobs = jobs.clamp(1, dialogues.len().max(1));
    let setup_err = |source| PipelineError::Generator {
        dialogue: "-".into(),
        turn: 0,
        source,
    };
    if jobs == 1 {
        let mut g = make().map_err(setup_err)?;
        return dialogues.iter().map(|d| run_dialogue(d, &mut g, env, opts)).collect();
    }
    let chunks: Vec<Result<Vec<(usize, DialogueRun)>, PipelineError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|w| {
                let make = &make;
                scope.spawn(move || {
                    let mut g = make().map_err(setup_err)?;
                    dialogues
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(jobs)
                        .map(|(i, d)| run_dialogue(d, &mut g, env, opts).map(|r| (i, r)))
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut slots: Vec<Option<DialogueRun>> = vec![None; dialogues.len()];
    for chunk in chunks {
        for (i, run) in chunk? {
            slots[i] = Some(run);
        }
    }
    Ok(slots.into_iter().map(|r| r.expect("every index assigned")).collect())
}

/// Joint goal accuracy over all turns of `runs`.
pub fn evaluate_dst(dialogues: &[Dialogue], runs: &[DialogueRun]) -> Result<Report, PipelineError> {
    let mut predicted = Vec::new();
    let mut gold = Vec::new();
    for (d, r) in dialogues.iter().zip(runs) {
        predicted.extend(r.states());
        gold.extend(d.turns.iter().map(|t| t.gold_state.clone()));
    }
    let dst = joint_goal_accuracy(&predicted, &gold)?;
    Ok(Report {
        joint_acc: Some(dst.joint_accuracy),
        ..Report::default()
    })
}

/// Joint accuracy, Inform, Success, BLEU and Combined for `runs`.
pub fn evaluate_e2e(
    dialogues: &[Dialogue],
    runs: &[DialogueRun],
    kb: &KnowledgeBase,
    schema: &Schema,
) -> Result<Report, PipelineError> {
    let mut report = evaluate_dst(dialogues, runs)?;
    let outputs: Vec<DialogueOutput> = runs.iter().map(DialogueRun::output).collect();
    let is = inform_success(dialogues, &outputs, kb, schema)?;
    let candidates: Vec<&str> = runs
        .iter()
        .flat_map(|r| r.traces.iter().map(|t| t.raw_response.as_str()))
        .collect();
    let references: Vec<&str> = dialogues
        .iter()
        .flat_map(|d| d.turns.iter().map(|t| t.gold_delex_response.as_str()))
        .collect();
    let bleu = corpus_bleu(&candidates, &references)?;
    report.inform = Some(is.inform);
    report.success = Some(is.success);
    report.bleu = Some(bleu);
    report.combined = Some(combined_score(is.inform, is.success, bleu));
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchReport {
    pub turns: usize,
    /// Mean generated state tokens per turn.
    pub not: f64,
    /// Mean wall time per turn.
    pub latency_ms: f64,
    pub generator_ms: f64,
    pub overhead_ms: f64,
}

/// Runs the corpus once in `mode` and averages state-token counts and
/// per-turn timings.
pub fn bench_not_latency<G: Generator + ?Sized>(
    dialogues: &[Dialogue],
    generator: &mut G,
    env: Env,
    mode: TargetMode,
) -> Result<BenchReport, PipelineError> {
    let mut turns = 0usize;
    let mut tokens = 0usize;
    let mut total = Duration::ZERO;
    let mut gen = Duration::ZERO;
    let mut overhead = Duration::ZERO;
    for d in dialogues {
        let run = run_dialogue(
            d,
            generator,
            env,
            RunOptions {
                mode,
                history: HistoryMode::Generated,
            },
        )?;
        for t in &run.traces {
            turns += 1;
            tokens += t.state_tokens;
            total += t.timings.total();
            gen += t.timings.generator();
            overhead += t.timings.overhead();
        }
    }
    let per_turn_ms = |d: Duration| {
        if turns == 0 {
            0.0
        } else {
            d.as_secs_f64() * 1000.0 / turns as f64
        }
    };
    Ok(BenchReport {
        turns,
        not: if turns == 0 { 0.0 } else { tokens as f64 / turns as f64 },
        latency_ms: per_turn_ms(total),
        generator_ms: per_turn_ms(gen),
        overhead_ms: per_turn_ms(overhead),
    })
}
