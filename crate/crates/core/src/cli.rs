//! The `mintl` command line.
//!
//! Exit codes: 0 on success, 1 on validation or metric failures, 2 on I/O,
//! transport and usage errors. Reports go to stdout as one JSON object;
//! `--verbose` adds a human-readable table on stderr.

use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::codec::{parse_full_state, parse_lev, serialize_full_state, serialize_lev, DELETE_TOKEN};
use crate::corpus::{convert_multiwoz, dump_corpus, load_corpus, subsample, Corpus, CorpusError, Preset};
use crate::kb::{KbError, KnowledgeBase};
use crate::lev::{apply_lev, classify_edit, compute_lev, EditValue};
use crate::pipeline::{
    bench_not_latency, evaluate_dst, evaluate_e2e, run_conformance, run_corpus, serve, BoxedGenerator, Env,
    GeneratorError, GeneratorSpec, HistoryMode, PipelineError, RecordingGenerator, Responder, RunOptions, ServeFault,
    TargetMode,
};
use crate::state::{validate_state, DialogueState, PipelineConfig, Schema};

#[derive(Debug, Parser)]
#[command(name = "mintl", version, about = "Levenshtein belief spans: diff, patch, track, evaluate")]
struct Cli {
    /// Print a human-readable table on stderr.
    #[arg(long, global = true)]
    verbose: bool,
    /// Worker threads for corpus runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Minimal Lev span between two full-state files.
    Diff {
        #[arg(long)]
        prev: PathBuf,
        #[arg(long)]
        next: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Apply a Lev span file to a full-state file.
    Patch {
        #[arg(long)]
        prev: PathBuf,
        #[arg(long)]
        lev: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Dialogue state tracking: joint goal accuracy.
    Track {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 3)]
        window: usize,
        /// Use gold system responses in the context window.
        #[arg(long)]
        gold_history: bool,
        /// Entity tables; without them every KB state is computed from an empty KB.
        #[arg(long)]
        kb: Option<PathBuf>,
    },
    /// End-to-end evaluation: joint accuracy, Inform, Success, BLEU, Combined.
    E2e {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, default_value_t = 2)]
        window: usize,
    },
    /// Tokens per turn and latency of the state request.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: TargetMode,
        #[arg(long, default_value = "gold:", value_parser = parse_spec)]
        generator: GeneratorSpec,
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        window: usize,
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
    },
    /// Low-resource subsample of a corpus.
    Sample {
        #[arg(long)]
        corpus: PathBuf,
        /// Percent of MultiWOZ: 5, 10 or 20.
        #[arg(long, value_parser = parse_preset)]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the sampled corpus here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check that an external generator speaks the wire protocol.
    Conformance {
        #[arg(long, value_parser = parse_spec)]
        generator: GeneratorSpec,
        #[arg(long, default_value_t = 5_000)]
        timeout_ms: u64,
    },
    /// Answer wire-protocol requests on stdin/stdout or a TCP port.
    Serve {
        /// Replay file of `{"kind","input","output"}` lines; echo when absent.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Listen on this address instead of stdin/stdout.
        #[arg(long)]
        listen: Option<String>,
        /// wrong-id, stall or exit-after=N.
        #[arg(long, value_parser = parse_fault)]
        fault: Option<ServeFault>,
    },
    /// Convert preprocessed MultiWOZ (data_for_damd.json) into a corpus file.
    Convert {
        #[arg(long)]
        multiwoz: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_parser = parse_spec)]
    generator: GeneratorSpec,
    #[arg(long, default_value = "lev", value_parser = parse_mode)]
    mode: TargetMode,
    /// Seed for booking outcomes and reference numbers.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
    /// Write every request and reply as a replay file.
    #[arg(long)]
    record: Option<PathBuf>,
}

fn parse_spec(s: &str) -> Result<GeneratorSpec, String> {
    s.parse().map_err(|e: GeneratorError| e.to_string())
}

fn parse_mode(s: &str) -> Result<TargetMode, String> {
    s.parse()
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse::<u32>()
        .ok()
        .and_then(Preset::from_percent)
        .ok_or_else(|| format!("{s:?} is not one of 5, 10, 20"))
}

fn parse_fault(s: &str) -> Result<ServeFault, String> {
    match s {
        "wrong-id" => Ok(ServeFault::WrongId),
        "stall" => Ok(ServeFault::Stall),
        _ => s
            .strip_prefix("exit-after=")
            .and_then(|n| n.parse().ok())
            .map(ServeFault::ExitAfter)
            .ok_or_else(|| format!("unknown fault {s:?}")),
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        if e.is_io() {
            Failure::io(e.to_string())
        } else {
            Failure::validation(e.to_string())
        }
    }
}

impl From<KbError> for Failure {
    fn from(e: KbError) -> Self {
        match e {
            KbError::Io { .. } => Failure::io(e.to_string()),
            _ => Failure::validation(e.to_string()),
        }
    }
}

impl From<GeneratorError> for Failure {
    fn from(e: GeneratorError) -> Self {
        if e.is_transport() {
            Failure::io(e.to_string())
        } else {
            Failure::validation(e.to_string())
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match &e {
            PipelineError::Generator { source, .. } if source.is_transport() => Failure::io(e.to_string()),
            _ => Failure::validation(e.to_string()),
        }
    }
}

type CliResult = Result<u8, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::io(format!("reading {}: {e}", path.display())))
}

fn load_schema(path: &Path) -> Result<Schema, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

/// Parses a full-state file; malformed fragments are a validation failure.
fn load_state(path: &Path, schema: &Schema) -> Result<DialogueState, Failure> {
    let report = parse_full_state(&read(path)?, schema);
    if !report.is_clean() {
        let kinds: Vec<String> = report
            .diagnostics
            .iter()
            .map(|d| format!("{} at token {}", d.kind, d.position))
            .collect();
        return Err(Failure::validation(format!("{}: {}", path.display(), kinds.join(", "))));
    }
    validate_state(&report.value, schema).map_err(|_| Failure::validation(format!("{}: keys outside schema", path.display())))?;
    Ok(report.value)
}

fn emit(out: &mut dyn Write, value: &serde_json::Value) -> Result<(), Failure> {
    emit_line(out, &value.to_string())
}

fn emit_line(out: &mut dyn Write, line: &str) -> Result<(), Failure> {
    writeln!(out, "{line}").map_err(|e| Failure::io(format!("writing output: {e}")))
}

fn verbose_table(verbose: bool, rows: &[(&str, String)]) {
    if verbose {
        let mut err = io::stderr().lock();
        for (k, v) in rows {
            let _ = writeln!(err, "{k:<14} {v}");
        }
    }
}

fn load_kb(path: Option<&Path>, schema: &Schema) -> Result<KnowledgeBase, Failure> {
    match path {
        Some(p) => Ok(KnowledgeBase::load_dir(p, schema)?),
        None => Ok(KnowledgeBase::empty()),
    }
}

fn config(window: usize, seed: u64) -> Result<PipelineConfig, Failure> {
    PipelineConfig::multiwoz(window, seed).map_err(|e| Failure::validation(e.to_string()))
}

/// Runs the corpus with `run.generator`, recording when asked.
fn run_all(
    corpus: &Corpus,
    run: &RunArgs,
    env: Env,
    history: HistoryMode,
    jobs: usize,
) -> Result<Vec<crate::pipeline::DialogueRun>, Failure> {
    let opts = RunOptions { mode: run.mode, history };
    let timeout = Duration::from_millis(run.timeout_ms);
    let build = || run.generator.build(&corpus.dialogues, &corpus.schema, run.mode, timeout);
    if let Some(path) = &run.record {
        let mut rec = RecordingGenerator::new(build()?);
        let runs = corpus
            .dialogues
            .iter()
            .map(|d| crate::pipeline::run_dialogue(d, &mut rec, env, opts))
            .collect::<Result<Vec<_>, _>>()?;
        rec.write_replay(path)
            .map_err(|e| Failure::io(format!("writing {}: {e}", path.display())))?;
        return Ok(runs);
    }
    let make = || -> Result<BoxedGenerator, GeneratorError> { build() };
    Ok(run_corpus(&corpus.dialogues, make, env, opts, jobs)?)
}

fn execute(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Cmd::Diff { prev, next, schema } => {
            let diffed = (|| {
                let schema = load_schema(&schema)?;
                let prev = load_state(&prev, &schema)?;
                let next = load_state(&next, &schema)?;
                let lev = compute_lev(&prev, &next, &schema).map_err(|e| Failure::validation(e.to_string()))?;
                if cli.verbose {
                    for (key, value) in lev.edits() {
                        let kind = classify_edit(&prev, &next, &key, &schema)
                            .ok()
                            .flatten()
                            .map(|k| k.to_string())
                            .unwrap_or_default();
                        let value = match value {
                            EditValue::Set(v) => v.as_str().to_string(),
                            EditValue::Delete => DELETE_TOKEN.to_string(),
                        };
                        eprintln!("{kind:<4} {:<12} {:<12} {value}", key.domain, key.slot);
                    }
                }
                Ok(serialize_lev(&lev))
            })();
            // Any failure to diff is reported as an I/O-class error.
            let text = diffed.map_err(|f: Failure| Failure::io(f.message))?;
            emit_line(out, &text)?;
            Ok(0)
        }
        Cmd::Patch { prev, lev, schema } => {
            let schema = load_schema(&schema)?;
            let prev = load_state(&prev, &schema)?;
            let report = parse_lev(&read(&lev)?, &schema);
            for d in &report.diagnostics {
                eprintln!("warning: {}: {} at token {}", lev.display(), d.kind, d.position);
            }
            let next = apply_lev(&prev, &report.value, &schema).map_err(|e| Failure::validation(e.to_string()))?;
            emit_line(out, &serialize_full_state(&next, &schema))?;
            Ok(0)
        }
        Cmd::Track {
            run,
            window,
            gold_history,
            kb,
        } => {
            let corpus = load_corpus(&run.corpus)?;
            let kb = load_kb(kb.as_deref(), &corpus.schema)?;
            let cfg = config(window, run.seed)?;
            let env = Env {
                kb: &kb,
                schema: &corpus.schema,
                cfg: &cfg,
            };
            let history = if gold_history { HistoryMode::Gold } else { HistoryMode::Generated };
            let runs = run_all(&corpus, &run, env, history, cli.jobs)?;
            let report = evaluate_dst(&corpus.dialogues, &runs)?;
            if cli.verbose {
                eprint!("{}", report.table());
            }
            emit(out, &serde_json::to_value(&report).expect("report serializes"))?;
            Ok(0)
        }
        Cmd::E2e { run, kb, window } => {
            let corpus = load_corpus(&run.corpus)?;
            let kb = KnowledgeBase::load_dir(&kb, &corpus.schema)?;
            let cfg = config(window, run.seed)?;
            let env = Env {
                kb: &kb,
                schema: &corpus.schema,
                cfg: &cfg,
            };
            let runs = run_all(&corpus, &run, env, HistoryMode::Generated, cli.jobs)?;
            let report = evaluate_e2e(&corpus.dialogues, &runs, &kb, &corpus.schema)?;
            if cli.verbose {
                eprint!("{}", report.table());
            }
            emit(out, &serde_json::to_value(&report).expect("report serializes"))?;
            Ok(0)
        }
        Cmd::Bench {
            corpus,
            mode,
            generator,
            kb,
            window,
            timeout_ms,
        } => {
            let corpus = load_corpus(&corpus)?;
            let kb = load_kb(kb.as_deref(), &corpus.schema)?;
            let cfg = config(window, 0)?;
            let env = Env {
                kb: &kb,
                schema: &corpus.schema,
                cfg: &cfg,
            };
            let mut g = generator.build(&corpus.dialogues, &corpus.schema, mode, Duration::from_millis(timeout_ms))?;
            let report = bench_not_latency(&corpus.dialogues, &mut g, env, mode)?;
            let mode_name = match mode {
                TargetMode::Lev => "lev",
                TargetMode::FullSpan => "full_span",
            };
            let mut value = serde_json::to_value(report).expect("report serializes");
            value["mode"] = json!(mode_name);
            verbose_table(
                cli.verbose,
                &[
                    ("mode", mode_name.to_string()),
                    ("turns", report.turns.to_string()),
                    ("not", format!("{:.4}", report.not)),
                    ("latency_ms", format!("{:.4}", report.latency_ms)),
                    ("generator_ms", format!("{:.4}", report.generator_ms)),
                    ("overhead_ms", format!("{:.4}", report.overhead_ms)),
                ],
            );
            emit(out, &value)?;
            Ok(0)
        }
        Cmd::Sample {
            corpus,
            preset,
            seed,
            out: target,
        } => {
            let corpus = load_corpus(&corpus)?;
            let picked = corpus.with_dialogues(subsample(&corpus.dialogues, preset.count(), seed)?);
            verbose_table(
                cli.verbose,
                &[("count", picked.dialogues.len().to_string()), ("seed", seed.to_string())],
            );
            match &target {
                Some(path) => {
                    dump_corpus(&picked, path)?;
                    emit(out, &json!({"dialogues": picked.dialogues.len(), "turns": picked.turn_count(), "seed": seed}))?;
                }
                None => emit_line(out, &picked.to_json())?,
            }
            Ok(0)
        }
        Cmd::Conformance { generator, timeout_ms } => {
            let mut g = generator.connect(Duration::from_millis(timeout_ms))?;
            let report = run_conformance(&mut g);
            if cli.verbose {
                for c in &report.checks {
                    eprintln!("{:<8} {:<18} {}", format!("{:?}", c.status).to_uppercase(), c.name, c.detail);
                }
            }
            emit(out, &serde_json::to_value(&report).expect("report serializes"))?;
            Ok(if report.passed { 0 } else { 1 })
        }
        Cmd::Serve { replay, listen, fault } => {
            let responder = match &replay {
                Some(p) => Responder::load_replay(p).map_err(|e| Failure::io(format!("{}: {e}", p.display())))?,
                None => Responder::Echo,
            };
            match listen {
                None => {
                    let stdin = io::stdin().lock();
                    let stdout = io::stdout().lock();
                    serve(stdin, stdout, &responder, fault).map_err(|e| Failure::io(e.to_string()))?;
                }
                Some(addr) => {
                    let listener = TcpListener::bind(&addr).map_err(|e| Failure::io(format!("binding {addr}: {e}")))?;
                    let local = listener.local_addr().map_err(|e| Failure::io(e.to_string()))?;
                    eprintln!("listening on {local}");
                    for stream in listener.incoming() {
                        let stream = stream.map_err(|e| Failure::io(e.to_string()))?;
                        let reader = BufReader::new(stream.try_clone().map_err(|e| Failure::io(e.to_string()))?);
                        if let Err(e) = serve(reader, stream, &responder, fault) {
                            eprintln!("connection ended: {e}");
                        }
                    }
                }
            }
            Ok(0)
        }
        Cmd::Convert { multiwoz, out: target } => {
            let (corpus, warnings) = convert_multiwoz(&read(&multiwoz)?)?;
            dump_corpus(&corpus, &target)?;
            if cli.verbose {
                for w in &warnings {
                    eprintln!("warning: {w}");
                }
            }
            emit(
                out,
                &json!({"dialogues": corpus.dialogues.len(), "turns": corpus.turn_count(), "warnings": warnings.len()}),
            )?;
            Ok(0)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(2);
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match execute(cli, &mut out) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
