//! Generators in another process, over newline-delimited JSON.
//!
//! Requests: `{"id":1,"kind":"lev","input":"..."}` and
//! `{"id":2,"kind":"response","input":"...","kb_state":"KB3"}`.
//! Replies: `{"id":1,"output":"..."}`. Ids start at 1 and increase by one;
//! there is at most one request in flight.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Generator, GeneratorError, TurnKey};
use crate::kb::KbState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Lev,
    Response,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestFrame {
    pub id: u64,
    pub kind: FrameKind,
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kb_state: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplyFrame {
    pub id: u64,
    pub output: String,
}

/// One line of a replay file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub kind: FrameKind,
    pub input: String,
    pub output: String,
}

fn spawn_reader<R: Read + Send + 'static>(source: R) -> Receiver<io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(source);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if tx.send(Ok(line)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
    rx
}

pub struct ExternalGenerator {
    label: String,
    writer: Box<dyn Write + Send>,
    replies: Receiver<io::Result<String>>,
    child: Option<Child>,
    socket: Option<TcpStream>,
    next_id: u64,
    timeout: Duration,
    broken: Option<String>,
}

impl std::fmt::Debug for ExternalGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalGenerator")
            .field("label", &self.label)
            .field("next_id", &self.next_id)
            .finish_non_exhaustive()
    }
}

impl ExternalGenerator {
    /// Runs `command` through `sh -c`; its stderr is inherited.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self, GeneratorError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| GeneratorError::Transport(format!("spawning {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        Ok(ExternalGenerator {
            label: format!("exec:{command}"),
            writer: Box::new(stdin),
            replies: spawn_reader(stdout),
            child: Some(child),
            socket: None,
            next_id: 1,
            timeout,
            broken: None,
        })
    }

    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, GeneratorError> {
        let transport = |e: io::Error| GeneratorError::Transport(format!("connecting to {addr}: {e}"));
        let resolved = addr
            .to_socket_addrs()
            .map_err(transport)?
            .next()
            .ok_or_else(|| GeneratorError::Transport(format!("{addr} did not resolve")))?;
        let stream = TcpStream::connect_timeout(&resolved, timeout).map_err(transport)?;
        let _ = stream.set_nodelay(true);
        let reader = stream.try_clone().map_err(transport)?;
        let socket = stream.try_clone().map_err(transport)?;
        Ok(ExternalGenerator {
            label: format!("tcp:{addr}"),
            writer: Box::new(stream),
            replies: spawn_reader(reader),
            child: None,
            socket: Some(socket),
            next_id: 1,
            timeout,
            broken: None,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Sends one request and waits for its reply.
    ///
    /// After a timeout or a protocol violation the connection is unusable
    /// and every later call fails.
    pub fn exchange(&mut self, kind: FrameKind, input: &str, kb_state: Option<KbState>) -> Result<String, GeneratorError> {
        if let Some(why) = &self.broken {
            return Err(GeneratorError::Transport(format!("connection unusable: {why}")));
        }
        let result = self.exchange_inner(kind, input, kb_state);
        if let Err(e) = &result {
            self.broken = Some(e.to_string());
        }
        result
    }

    fn exchange_inner(&mut self, kind: FrameKind, input: &str, kb_state: Option<KbState>) -> Result<String, GeneratorError> {
        let id = self.next_id;
        self.next_id += 1;
        let frame = RequestFrame {
            id,
            kind,
            input: input.to_string(),
            kb_state: kb_state.map(|k| k.to_string()),
        };
        let mut line = serde_json::to_string(&frame).expect("frames serialize");
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| GeneratorError::Transport(format!("writing request {id}: {e}")))?;
        let raw = match self.replies.recv_timeout(self.timeout) {
            Ok(Ok(raw)) => raw,
            Ok(Err(e)) => return Err(GeneratorError::Transport(format!("reading reply {id}: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(GeneratorError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(GeneratorError::Closed),
        };
        let frame_text = raw.trim_end_matches(['\n', '\r']).to_string();
        let reply: ReplyFrame = serde_json::from_str(&frame_text).map_err(|e| GeneratorError::MalformedReply {
            frame: frame_text.clone(),
            reason: e.to_string(),
        })?;
        if reply.id != id {
            return Err(GeneratorError::MalformedReply {
                frame: frame_text,
                reason: format!("expected id {id}, got {}", reply.id),
            });
        }
        Ok(reply.output)
    }
}

impl Drop for ExternalGenerator {
    fn drop(&mut self) {
        if let Some(socket) = &self.socket {
            let _ = socket.shutdown(std::net::Shutdown::Both);
        }
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Generator for ExternalGenerator {
    fn state_request(&mut self, _key: TurnKey, encoded: &str) -> Result<String, GeneratorError> {
        self.exchange(FrameKind::Lev, encoded, None)
    }

    fn response_request(&mut self, _key: TurnKey, encoded: &str, kb_state: KbState) -> Result<String, GeneratorError> {
        self.exchange(FrameKind::Response, encoded, Some(kb_state))
    }
}

/// Wraps a generator and keeps every request and reply as replay entries.
#[derive(Debug)]
pub struct RecordingGenerator<G> {
    inner: G,
    entries: Vec<ReplayEntry>,
}

impl<G: Generator> RecordingGenerator<G> {
    pub fn new(inner: G) -> Self {
        RecordingGenerator {
            inner,
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[ReplayEntry] {
        &self.entries
    }

    pub fn write_replay(&self, path: &Path) -> io::Result<()> {
        let mut out = io::BufWriter::new(std::fs::File::create(path)?);
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

impl<G: Generator> Generator for RecordingGenerator<G> {
    fn state_request(&mut self, key: TurnKey, encoded: &str) -> Result<String, GeneratorError> {
        let output = self.inner.state_request(key, encoded)?;
        self.entries.push(ReplayEntry {
            kind: FrameKind::Lev,
            input: encoded.to_string(),
            output: output.clone(),
        });
        Ok(output)
    }

    fn response_request(&mut self, key: TurnKey, encoded: &str, kb_state: KbState) -> Result<String, GeneratorError> {
        let output = self.inner.response_request(key, encoded, kb_state)?;
        self.entries.push(ReplayEntry {
            kind: FrameKind::Response,
            input: encoded.to_string(),
            output: output.clone(),
        });
        Ok(output)
    }
}

/// How a [`serve`] loop answers requests.
#[derive(Debug, Clone)]
pub enum Responder {
    /// Replies with the request input.
    Echo,
    /// Replies from a replay table; misses get an empty output.
    Replay(HashMap<(FrameKind, String), String>),
}

impl Responder {
    pub fn load_replay(path: &Path) -> io::Result<Self> {
        let file = BufReader::new(std::fs::File::open(path)?);
        let mut table = HashMap::new();
        for (n, line) in file.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: ReplayEntry = serde_json::from_str(&line).map_err(|err| {
                io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {err}", path.display(), n + 1))
            })?;
            table.insert((e.kind, e.input), e.output);
        }
        Ok(Responder::Replay(table))
    }

    fn respond(&self, req: &RequestFrame) -> String {
        match self {
            Responder::Echo => req.input.clone(),
            Responder::Replay(table) => match table.get(&(req.kind, req.input.clone())) {
                Some(out) => out.clone(),
                None => {
                    eprintln!("replay miss for request {}", req.id);
                    String::new()
                }
            },
        }
    }
}

/// Misbehaviours for exercising client error handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeFault {
    /// Replies carry `id + 1`.
    WrongId,
    /// Requests are read but never answered.
    Stall,
    /// The loop ends after this many replies.
    ExitAfter(usize),
}

/// Answers requests from `input` on `output` until end of input.
/// Lines that are not request frames are reported on stderr and skipped.
pub fn serve<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    responder: &Responder,
    fault: Option<ServeFault>,
) -> io::Result<()> {
    let mut replies = 0usize;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(ServeFault::ExitAfter(n)) = fault {
            if replies >= n {
                return Ok(());
            }
        }
        let req: RequestFrame = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("bad request frame: {e}");
                continue;
            }
        };
        if fault == Some(ServeFault::Stall) {
            continue;
        }
        let id = if fault == Some(ServeFault::WrongId) { req.id + 1 } else { req.id };
        let reply = ReplyFrame {
            id,
            output: responder.respond(&req),
        };
        serde_json::to_writer(&mut output, &reply)?;
        output.write_all(b"\n")?;
        output.flush()?;
        replies += 1;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConformanceCheck {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConformanceReport {
    pub generator: String,
    pub passed: bool,
    pub checks: Vec<ConformanceCheck>,
}

type Probe = (FrameKind, String, Option<KbState>);

/// Exercises the wire protocol with a fixed set of requests. Checks after
/// the first failure are skipped.
pub fn run_conformance(gen: &mut ExternalGenerator) -> ConformanceReport {
    let long = "<EOB> ".to_string() + &"word ".repeat(4000) + "<EOU>";
    let kb2 = KbState::new(2);
    let probes: Vec<(&'static str, Vec<Probe>)> = vec![
        ("lev_request", vec![(FrameKind::Lev, "<EOB> i need a hotel <EOU>".into(), None)]),
        (
            "response_request",
            vec![(FrameKind::Response, "<EOB> i need a hotel <EOU>".into(), kb2)],
        ),
        (
            "unicode_input",
            vec![(FrameKind::Lev, "<EOB> café ☕ \"quoted\" \\ tab\t<EOU>".into(), None)],
        ),
        ("empty_input", vec![(FrameKind::Lev, String::new(), None)]),
        ("long_input", vec![(FrameKind::Lev, long, None)]),
        (
            "sequential_ids",
            (1..=5)
                .map(|i| (FrameKind::Lev, format!("<EOB> request {i} <EOU>"), None))
                .collect(),
        ),
    ];
    let mut checks = Vec::new();
    let mut failed = false;
    for (name, requests) in probes {
        if failed {
            checks.push(ConformanceCheck {
                name,
                status: CheckStatus::Skipped,
                detail: "earlier check failed".into(),
            });
            continue;
        }
        let outcome = requests
            .into_iter()
            .try_for_each(|(kind, input, kb)| gen.exchange(kind, &input, kb).map(drop));
        checks.push(match outcome {
            Ok(()) => ConformanceCheck {
                name,
                status: CheckStatus::Pass,
                detail: String::new(),
            },
            Err(e) => {
                failed = true;
                ConformanceCheck {
                    name,
                    status: CheckStatus::Fail,
                    detail: e.to_string(),
                }
            }
        });
    }
    ConformanceReport {
        generator: gen.label().to_string(),
        passed: !failed,
        checks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    fn tcp_server(responder: Responder, fault: Option<ServeFault>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let reader = BufReader::new(stream.try_clone().unwrap());
            let _ = serve(reader, stream, &responder, fault);
        });
        addr
    }

    fn connect(fault: Option<ServeFault>) -> ExternalGenerator {
        ExternalGenerator::connect(&tcp_server(Responder::Echo, fault), Duration::from_millis(500)).unwrap()
    }

    #[test]
    fn frames_match_the_wire_format() {
        let req = RequestFrame {
            id: 3,
            kind: FrameKind::Response,
            input: "x".into(),
            kb_state: Some("KB2".into()),
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"id":3,"kind":"response","input":"x","kb_state":"KB2"}"#
        );
        let lev = RequestFrame {
            kind: FrameKind::Lev,
            kb_state: None,
            ..req
        };
        assert_eq!(serde_json::to_string(&lev).unwrap(), r#"{"id":3,"kind":"lev","input":"x"}"#);
    }

    #[test]
    fn echo_over_tcp() {
        let mut g = connect(None);
        assert_eq!(g.exchange(FrameKind::Lev, "héllo\nworld", None).unwrap(), "héllo\nworld");
        assert_eq!(g.exchange(FrameKind::Response, "b", KbState::new(4)).unwrap(), "b");
        let report = run_conformance(&mut g);
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn wrong_id_is_malformed() {
        let mut g = connect(Some(ServeFault::WrongId));
        let err = g.exchange(FrameKind::Lev, "a", None).unwrap_err();
        assert!(matches!(&err, GeneratorError::MalformedReply { frame, .. } if frame.contains("\"id\":2")), "{err}");
        assert!(g.exchange(FrameKind::Lev, "a", None).is_err());
    }

    #[test]
    fn stall_times_out() {
        let mut g = connect(Some(ServeFault::Stall));
        let report = run_conformance(&mut g);
        assert!(!report.passed);
        assert_eq!(report.checks[0].status, CheckStatus::Fail);
        assert!(report.checks[0].detail.contains("no reply within"), "{report:?}");
        assert!(report.checks[1..].iter().all(|c| c.status == CheckStatus::Skipped));
    }

    #[test]
    fn early_exit_closes() {
        let mut g = connect(Some(ServeFault::ExitAfter(1)));
        g.exchange(FrameKind::Lev, "a", None).unwrap();
        assert!(matches!(g.exchange(FrameKind::Lev, "b", None).unwrap_err(), GeneratorError::Closed));
    }

    #[test]
    fn serve_skips_garbage_and_replays() {
        let mut table = HashMap::new();
        table.insert((FrameKind::Lev, "in".to_string()), "out".to_string());
        let input = "not json\n{\"id\":1,\"kind\":\"lev\",\"input\":\"in\"}\n{\"id\":2,\"kind\":\"response\",\"input\":\"in\",\"kb_state\":\"KB1\"}\n";
        let mut out = Vec::new();
        serve(input.as_bytes(), &mut out, &Responder::Replay(table), None).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "{\"id\":1,\"output\":\"out\"}\n{\"id\":2,\"output\":\"\"}\n");
    }

    #[test]
    fn spawned_child_round_trip() {
        let script = r#"while IFS= read -r line; do id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/'); printf '{"id":%s,"output":"ok"}\n' "$id"; done"#;
        let mut g = ExternalGenerator::spawn(script, Duration::from_secs(5)).unwrap();
        assert_eq!(g.exchange(FrameKind::Lev, "x", None).unwrap(), "ok");
        assert_eq!(g.exchange(FrameKind::Lev, "y", None).unwrap(), "ok");
    }
}
