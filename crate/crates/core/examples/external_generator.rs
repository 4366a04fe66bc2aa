//! Drive the pipeline through an out-of-process generator.
//!
//! ```text
//! cargo run --example external_generator
//! ```
//!
//! A gold run on the excerpt corpus is recorded as a replay file. A TCP
//! server answers from that file; the conformance checks run against it,
//! and then the whole corpus is replayed over the wire. The metrics match
//! the in-process run.

use std::io::BufReader;
use std::net::TcpListener;
use std::path::PathBuf;
use std::time::Duration;

use mintl::corpus::{convert_multiwoz, Corpus};
use mintl::kb::KnowledgeBase;
use mintl::pipeline::{
    evaluate_e2e, run_conformance, run_dialogue, serve, Env, ExternalGenerator, Generator, GoldOracle,
    RecordingGenerator, Responder, RunOptions, TargetMode,
};
use mintl::state::PipelineConfig;

fn run_all<G: Generator>(corpus: &Corpus, g: &mut G, env: Env) -> Result<Vec<mintl::pipeline::DialogueRun>, Box<dyn std::error::Error>> {
    Ok(corpus
        .dialogues
        .iter()
        .map(|d| run_dialogue(d, &mut *g, env, RunOptions::default()))
        .collect::<Result<Vec<_>, _>>()?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/multiwoz_excerpt");
    let (corpus, _) = convert_multiwoz(&std::fs::read_to_string(dir.join("data_for_damd.json"))?)?;
    let kb = KnowledgeBase::load_dir(&dir.join("db"), &corpus.schema)?;
    let cfg = PipelineConfig::multiwoz(2, 0)?;
    let env = Env {
        kb: &kb,
        schema: &corpus.schema,
        cfg: &cfg,
    };

    let mut recorder = RecordingGenerator::new(GoldOracle::new(&corpus.dialogues, &corpus.schema, TargetMode::Lev)?);
    let local = evaluate_e2e(&corpus.dialogues, &run_all(&corpus, &mut recorder, env)?, &kb, &corpus.schema)?;
    let replay = std::env::temp_dir().join(format!("mintl-replay-{}.jsonl", std::process::id()));
    recorder.write_replay(&replay)?;
    println!("recorded {} frames to {}", recorder.entries().len(), replay.display());

    let responder = Responder::load_replay(&replay)?;
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let reader = BufReader::new(stream.try_clone().expect("clone stream"));
            let _ = serve(reader, stream, &responder, None);
        }
    });

    let timeout = Duration::from_secs(5);
    let report = run_conformance(&mut ExternalGenerator::connect(&addr.to_string(), timeout)?);
    for c in &report.checks {
        println!("{:<18} {:?}", c.name, c.status);
    }

    let mut remote = ExternalGenerator::connect(&addr.to_string(), timeout)?;
    let over_wire = evaluate_e2e(&corpus.dialogues, &run_all(&corpus, &mut remote, env)?, &kb, &corpus.schema)?;
    println!("in process: {}", local.to_json());
    println!("over tcp:   {}", over_wire.to_json());
    assert_eq!(local, over_wire);
    std::fs::remove_file(&replay)?;
    Ok(())
}
