//! Flat-text span grammar.
//!
//! ```text
//! lev   := "<SOB>" block* "<EOB>"
//! state := block*
//! block := "[" domain "]" (slot value-token+)+
//! ```
//!
//! A value made of the single token `NULL` deletes the slot. Tokens are
//! separated by single ASCII spaces on output; any whitespace on input.
//!
//! Parsing never fails. Invalid fragments are dropped and reported as
//! [`Diagnostic`]s, so the returned span or state is always schema-valid.
//! Value termination is greedy: a value ends at the next known slot of
//! the current domain or the next bracketed token. A value that contains
//! a sibling slot name as a token is therefore split there.

use std::fmt;

use thiserror::Error;

use crate::lev::{EditValue, LevSpan};
use crate::state::{DialogueState, Schema, SlotKey, Speaker, Utterance, Value};

pub const SOB: &str = "<SOB>";
pub const EOB: &str = "<EOB>";
pub const EOU: &str = "<EOU>";
pub const EOR: &str = "<EOR>";
pub const DELETE_TOKEN: &str = "NULL";

/// True for segment tokens, `<KBn>` and the delete marker.
pub fn is_reserved_token(tok: &str) -> bool {
    matches!(tok, SOB | EOB | EOU | EOR | DELETE_TOKEN) || is_kb_token(tok)
}

fn is_kb_token(tok: &str) -> bool {
    tok.strip_prefix("<KB")
        .and_then(|t| t.strip_suffix('>'))
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
}

fn bracketed(tok: &str) -> Option<&str> {
    if tok.len() >= 2 && tok.starts_with('[') && tok.ends_with(']') {
        Some(&tok[1..tok.len() - 1])
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IssueKind {
    UnknownDomain,
    UnknownSlot,
    /// A slot followed by no value tokens.
    DanglingSlot,
    /// Tokens outside any domain block, or after `<EOB>`.
    OrphanValue,
    /// `<SOB>` without a closing `<EOB>`.
    MissingTerminator,
    /// A slot given twice; the earlier occurrence is dropped.
    DuplicateSlot,
    /// `NULL` inside a full state, where deletion has no meaning.
    DeleteInState,
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IssueKind::UnknownDomain => "unknown_domain",
            IssueKind::UnknownSlot => "unknown_slot",
            IssueKind::DanglingSlot => "dangling_slot",
            IssueKind::OrphanValue => "orphan_value",
            IssueKind::MissingTerminator => "missing_terminator",
            IssueKind::DuplicateSlot => "duplicate_slot",
            IssueKind::DeleteInState => "delete_in_state",
        })
    }
}

/// `position` is a 0-based whitespace-token index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Diagnostic {
    pub position: usize,
    pub kind: IssueKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseReport<T> {
    pub value: T,
    pub diagnostics: Vec<Diagnostic>,
}

impl<T> ParseReport<T> {
    pub fn is_clean(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

#[derive(Default)]
struct TokenWriter(String);

impl TokenWriter {
    fn push(&mut self, tok: &str) {
        if !self.0.is_empty() {
            self.0.push(' ');
        }
        self.0.push_str(tok);
    }

    fn push_domain(&mut self, domain: &str) {
        if !self.0.is_empty() {
            self.0.push(' ');
        }
        self.0.push('[');
        self.0.push_str(domain);
        self.0.push(']');
    }
}

pub fn serialize_lev(lev: &LevSpan) -> String {
    let mut out = TokenWriter::default();
    out.push(SOB);
    for block in lev.blocks() {
        out.push_domain(&block.domain);
        for edit in &block.edits {
            out.push(&edit.slot);
            match &edit.value {
                EditValue::Set(v) => out.push(v.as_str()),
                EditValue::Delete => out.push(DELETE_TOKEN),
            }
        }
    }
    out.push(EOB);
    out.0
}

pub fn serialize_full_state(state: &DialogueState, schema: &Schema) -> String {
    let mut out = TokenWriter::default();
    for domain in schema.domains() {
        let mut opened = false;
        for slot in &domain.slots {
            if let Some(v) = state.lookup(&domain.name, slot) {
                if !opened {
                    out.push_domain(&domain.name);
                    opened = true;
                }
                out.push(slot);
                out.push(v.as_str());
            }
        }
    }
    out.0
}

struct OpenEdit<'a> {
    pos: usize,
    slot: &'a str,
    tokens: Vec<&'a str>,
}

enum Block<'a> {
    /// Before any domain token.
    None,
    /// Inside an unknown domain; everything is dropped until the next domain token.
    Skipping,
    Domain { name: &'a str, skipping_slot: bool },
}

/// Raw `(key, value-or-delete, slot position)` triples in input order.
fn scan(text: &str, schema: &Schema, diags: &mut Vec<Diagnostic>) -> Vec<(SlotKey, Option<Value>, usize)> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut out = Vec::new();
    let mut block = Block::None;
    let mut open: Option<OpenEdit> = None;
    let mut orphan_run = false;
    let mut started = false;
    let mut saw_sob = false;
    let mut saw_eob = false;

    fn close(
        open: &mut Option<OpenEdit>,
        domain: &str,
        diags: &mut Vec<Diagnostic>,
        out: &mut Vec<(SlotKey, Option<Value>, usize)>,
    ) {
        if let Some(e) = open.take() {
            if e.tokens.is_empty() {
                diags.push(Diagnostic {
                    position: e.pos,
                    kind: IssueKind::DanglingSlot,
                });
            } else {
                let value = if e.tokens == [DELETE_TOKEN] {
                    None
                } else {
                    Value::new(&e.tokens.join(" "))
                };
                out.push((SlotKey::new(domain, e.slot), value, e.pos));
            }
        }
    }

    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        if tok == SOB && !started {
            saw_sob = true;
            started = true;
            i += 1;
            continue;
        }
        started = true;
        if tok == EOB {
            saw_eob = true;
            break;
        }
        let current_domain = match &block {
            Block::Domain { name, .. } => Some(*name),
            _ => None,
        };
        if let Some(name) = bracketed(tok) {
            if let Some(d) = current_domain {
                close(&mut open, d, diags, &mut out);
            }
            orphan_run = false;
            if schema.has_domain(name) {
                block = Block::Domain {
                    name,
                    skipping_slot: false,
                };
            } else {
                diags.push(Diagnostic {
                    position: i,
                    kind: IssueKind::UnknownDomain,
                });
                block = Block::Skipping;
            }
        } else if tok != DELETE_TOKEN && is_reserved_token(tok) {
            if let Some(d) = current_domain {
                close(&mut open, d, diags, &mut out);
            }
            diags.push(Diagnostic {
                position: i,
                kind: IssueKind::OrphanValue,
            });
            block = Block::None;
            orphan_run = true;
        } else {
            match &mut block {
                Block::None => {
                    if !orphan_run {
                        diags.push(Diagnostic {
                            position: i,
                            kind: IssueKind::OrphanValue,
                        });
                        orphan_run = true;
                    }
                }
                Block::Skipping => {}
                Block::Domain { name, skipping_slot } => {
                    let name = *name;
                    if schema.has_slot(name, tok) {
                        *skipping_slot = false;
                        close(&mut open, name, diags, &mut out);
                        open = Some(OpenEdit {
                            pos: i,
                            slot: tok,
                            tokens: Vec::new(),
                        });
                    } else if let Some(e) = open.as_mut() {
                        e.tokens.push(tok);
                    } else if !*skipping_slot {
                        diags.push(Diagnostic {
                            position: i,
                            kind: IssueKind::UnknownSlot,
                        });
                        *skipping_slot = true;
                    }
                }
            }
        }
        i += 1;
    }
    if let Block::Domain { name, .. } = block {
        close(&mut open, name, diags, &mut out);
    }
    if saw_eob && i + 1 < tokens.len() {
        diags.push(Diagnostic {
            position: i + 1,
            kind: IssueKind::OrphanValue,
        });
    }
    if saw_sob && !saw_eob {
        diags.push(Diagnostic {
            position: tokens.len(),
            kind: IssueKind::MissingTerminator,
        });
    }
    out
}

/// Keeps the last occurrence of each key, reporting the dropped ones.
fn dedup<T>(items: Vec<(SlotKey, T, usize)>, diags: &mut Vec<Diagnostic>) -> Vec<(SlotKey, T)> {
    let mut kept: Vec<(SlotKey, T, usize)> = Vec::with_capacity(items.len());
    for (key, value, pos) in items {
        if let Some(idx) = kept.iter().position(|(k, _, _)| *k == key) {
            let (_, _, old) = kept.remove(idx);
            diags.push(Diagnostic {
                position: old,
                kind: IssueKind::DuplicateSlot,
            });
        }
        kept.push((key, value, pos));
    }
    kept.into_iter().map(|(k, v, _)| (k, v)).collect()
}

pub fn parse_lev(text: &str, schema: &Schema) -> ParseReport<LevSpan> {
    let mut diagnostics = Vec::new();
    let edits = dedup(scan(text, schema, &mut diagnostics), &mut diagnostics);
    let span = LevSpan::from_edits(
        edits.into_iter().map(|(k, v)| {
            let value = match v {
                Some(v) => EditValue::Set(v),
                None => EditValue::Delete,
            };
            (k, value)
        }),
        schema,
    )
    .expect("scanner only yields unique schema keys");
    diagnostics.sort_by_key(|d| d.position);
    ParseReport {
        value: span,
        diagnostics,
    }
}

pub fn parse_full_state(text: &str, schema: &Schema) -> ParseReport<DialogueState> {
    let mut diagnostics = Vec::new();
    let raw = scan(text, schema, &mut diagnostics);
    let mut present = Vec::with_capacity(raw.len());
    for (key, value, pos) in raw {
        match value {
            Some(v) => present.push((key, v, pos)),
            None => diagnostics.push(Diagnostic {
                position: pos,
                kind: IssueKind::DeleteInState,
            }),
        }
    }
    let state = dedup(present, &mut diagnostics).into_iter().collect();
    diagnostics.sort_by_key(|d| d.position);
    ParseReport {
        value: state,
        diagnostics,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContextError {
    #[error("context window is empty")]
    EmptyWindow,
    #[error("context window must end with a user utterance")]
    EndsWithSystem,
}

/// `B_{t-1} <EOB> U <EOU> R <EOR> ... U_t <EOU>`; utterances are trimmed.
pub fn encode_context(prev_state: &DialogueState, window: &[Utterance], schema: &Schema) -> Result<String, ContextError> {
    match window.last() {
        None => return Err(ContextError::EmptyWindow),
        Some(u) if u.speaker == Speaker::System => return Err(ContextError::EndsWithSystem),
        _ => {}
    }
    let mut out = serialize_full_state(prev_state, schema);
    if !out.is_empty() {
        out.push(' ');
    }
    out.push_str(EOB);
    for u in window {
        let text = u.text.trim();
        if !text.is_empty() {
            out.push(' ');
            out.push_str(text);
        }
        out.push(' ');
        out.push_str(match u.speaker {
            Speaker::User => EOU,
            Speaker::System => EOR,
        });
    }
    Ok(out)
}

pub fn target_token_count(text: &str) -> usize {
    text.split_whitespace().count()
}
