//! Entity tables, constraint queries, booking simulation, KB states and
//! lexicalization of delexicalized responses.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::state::{normalize_value, DialogueState, PipelineConfig, Schema, Turn};

pub use crate::state::BookingOutcome;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {source}")]
    Parse {
        file: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{file}: domain {domain:?} is not in the schema")]
    UnknownDomain { file: String, domain: String },
    #[error("{file}: record {record}: {detail}")]
    Record { file: String, record: usize, detail: String },
    #[error("no thresholds configured for domain {0:?}")]
    MissingThresholds(String),
}

/// Values that mean the user has no preference.
const DONT_CARE: &[&str] = &["dontcare", "dont care", "don't care", "do n't care", "any"];

pub fn is_dont_care(value: &str) -> bool {
    DONT_CARE.contains(&value)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    /// Position in its table.
    pub index: usize,
    pub fields: BTreeMap<String, String>,
}

impl Entity {
    pub fn get(&self, field: &str) -> Option<&str> {
        self.fields.get(field).map(String::as_str)
    }

    /// The `name`, falling back to `id`.
    pub fn label(&self) -> &str {
        self.get("name").or_else(|| self.get("id")).unwrap_or_default()
    }
}

/// Per-domain entity tables. Immutable after loading.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    tables: BTreeMap<String, Vec<Entity>>,
}

fn domain_from_file(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let domain = stem
        .strip_suffix("_db_processed")
        .or_else(|| stem.strip_suffix("_db"))
        .unwrap_or(stem);
    Some(domain.to_string())
}

impl KnowledgeBase {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Loads every `*.json` file in `dir`. The file stem names the domain;
    /// `_db` and `_db_processed` suffixes are stripped.
    pub fn load_dir(dir: &Path, schema: &Schema) -> Result<Self, KbError> {
        let io = |source| KbError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io)?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
        paths.sort();
        let mut kb = KnowledgeBase::empty();
        for path in paths {
            let text = std::fs::read_to_string(&path).map_err(|source| KbError::Io {
                path: path.clone(),
                source,
            })?;
            let domain = domain_from_file(&path).unwrap_or_default();
            kb.add_table(&domain, &text, &path.display().to_string(), schema)?;
        }
        Ok(kb)
    }

    /// Parses one table. `file` labels errors.
    ///
    /// A table is a JSON array of objects with string (or numeric) values.
    /// Each record needs a `name` or `id`, and every other key must be a
    /// tracked or requestable slot of the domain.
    pub fn add_table(&mut self, domain: &str, text: &str, file: &str, schema: &Schema) -> Result<(), KbError> {
        let spec = schema.domain(domain).ok_or_else(|| KbError::UnknownDomain {
            file: file.to_string(),
            domain: domain.to_string(),
        })?;
        let raw: Vec<serde_json::Map<String, serde_json::Value>> =
            serde_json::from_str(text).map_err(|source| KbError::Parse {
                file: file.to_string(),
                source,
            })?;
        let bad = |record: usize, detail: String| KbError::Record {
            file: file.to_string(),
            record,
            detail,
        };
        let mut table = Vec::with_capacity(raw.len());
        for (index, obj) in raw.into_iter().enumerate() {
            let mut fields = BTreeMap::new();
            for (key, value) in obj {
                let known = key == "name"
                    || key == "id"
                    || spec.slots.contains(&key)
                    || spec.requestable.contains(&key);
                if !known {
                    return Err(bad(index, format!("field {key:?} is not a slot of {domain}")));
                }
                let text = match value {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Number(n) => n.to_string(),
                    other => return Err(bad(index, format!("field {key:?} has non-text value {other}"))),
                };
                fields.insert(key, text);
            }
            if !fields.contains_key("name") && !fields.contains_key("id") {
                return Err(bad(index, "record has neither name nor id".to_string()));
            }
            table.push(Entity { index, fields });
        }
        self.tables.insert(domain.to_string(), table);
        Ok(())
    }

    pub fn has_table(&self, domain: &str) -> bool {
        self.tables.contains_key(domain)
    }

    pub fn table(&self, domain: &str) -> &[Entity] {
        self.tables.get(domain).map(Vec::as_slice).unwrap_or_default()
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.tables.keys().map(String::as_str)
    }

    /// The table as a pretty-printed JSON array, keys sorted.
    pub fn dump_table(&self, domain: &str) -> String {
        let rows: Vec<&BTreeMap<String, String>> = self.table(domain).iter().map(|e| &e.fields).collect();
        serde_json::to_string_pretty(&rows).expect("string maps always serialize")
    }
}

/// Entities matching every informable constraint of `domain` in `state`,
/// in table order.
///
/// Booking slots, match-exempt slots and don't-care values are not
/// constraints. An entity lacking a constrained attribute does not match.
pub fn query<'kb>(kb: &'kb KnowledgeBase, state: &DialogueState, domain: &str, schema: &Schema) -> Vec<&'kb Entity> {
    let Some(spec) = schema.domain(domain) else {
        return Vec::new();
    };
    let constraints: Vec<(&str, &str)> = state
        .domain_entries(domain)
        .filter(|(slot, v)| spec.is_query_constraint(slot) && !is_dont_care(v.as_str()))
        .map(|(slot, v)| (slot, v.as_str()))
        .collect();
    kb.table(domain)
        .iter()
        .filter(|e| {
            constraints
                .iter()
                .all(|(slot, want)| e.get(slot).is_some_and(|have| normalize_value(have) == *want))
        })
        .collect()
}

/// Books in `domain` for the current turn.
///
/// Priority: the turn's gold annotation, then `None` when the state holds
/// none of the domain's booking slots, then a seeded pseudo-random outcome
/// over `(seed, dialogue id, domain, booking values)`.
pub fn attempt_booking(
    dialogue_id: &str,
    turn: &Turn,
    state: &DialogueState,
    domain: &str,
    schema: &Schema,
    cfg: &PipelineConfig,
) -> BookingOutcome {
    if let Some(gold) = turn.gold_book_outcome {
        return gold;
    }
    let Some(spec) = schema.domain(domain) else {
        return BookingOutcome::None;
    };
    let values: Vec<(&str, &str)> = spec
        .booking_slots
        .iter()
        .filter_map(|s| state.lookup(domain, s).map(|v| (s.as_str(), v.as_str())))
        .collect();
    if values.is_empty() {
        return BookingOutcome::None;
    }
    let mut h = Sha256::new();
    h.update(cfg.rng_seed.to_le_bytes());
    for part in [dialogue_id, domain] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    for (slot, value) in values {
        h.update(slot.as_bytes());
        h.update(b"=");
        h.update(value.as_bytes());
        h.update([0]);
    }
    if h.finalize()[0] < 128 {
        BookingOutcome::Success
    } else {
        BookingOutcome::Fail
    }
}

/// Eight uppercase alphanumerics from a seeded hash.
pub fn reference_number(seed: u64, dialogue_id: &str, turn: usize, domain: &str) -> String {
    const ALPHABET: &[u8; 36] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    let mut h = Sha256::new();
    h.update(b"reference");
    h.update(seed.to_le_bytes());
    h.update(dialogue_id.as_bytes());
    h.update([0]);
    h.update((turn as u64).to_le_bytes());
    h.update(domain.as_bytes());
    h.finalize()[..8]
        .iter()
        .map(|b| ALPHABET[(*b % 36) as usize] as char)
        .collect()
}

/// One of the 15 KB states, `KB1`..=`KB15`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KbState(u8);

impl KbState {
    pub const COUNT: u8 = 15;

    pub fn new(n: u8) -> Option<Self> {
        (1..=Self::COUNT).contains(&n).then_some(KbState(n))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// The `<KBn>` token.
    pub fn token(self) -> String {
        format!("<KB{}>", self.0)
    }
}

impl fmt::Display for KbState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KB{}", self.0)
    }
}

impl FromStr for KbState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("KB")
            .and_then(|n| n.parse::<u8>().ok())
            .and_then(KbState::new)
            .ok_or_else(|| format!("not a KB state: {s:?}"))
    }
}

/// Maps a match count and booking outcome to a KB state.
///
/// Match bands are disjoint and checked in order: no query, 0, 1..=T1,
/// T1+1..=T2, above T2. Booking outcomes `none`, `fail` and `success`
/// select KB1-5, KB6-10 and KB11-15.
pub fn categorize_kb_state(
    match_count: Option<usize>,
    booking: BookingOutcome,
    domain: &str,
    cfg: &PipelineConfig,
) -> Result<KbState, KbError> {
    let t = cfg
        .thresholds_for(domain)
        .ok_or_else(|| KbError::MissingThresholds(domain.to_string()))?;
    let band = match match_count {
        None => 0,
        Some(0) => 1,
        Some(n) if n <= t.t1 => 2,
        Some(n) if n <= t.t2 => 3,
        Some(_) => 4,
    };
    let base = match booking {
        BookingOutcome::None => 0,
        BookingOutcome::Fail => 5,
        BookingOutcome::Success => 10,
    };
    Ok(KbState(base + band + 1))
}

/// Inputs for [`lexicalize`].
#[derive(Debug, Clone, Copy)]
pub struct LexContext<'a> {
    pub domain: Option<&'a str>,
    /// Query result; its length fills `[value_choice]`.
    pub entities: &'a [&'a Entity],
    pub state: &'a DialogueState,
    pub reference: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substitution {
    /// Byte range of the replacement in the lexicalized text.
    pub range: std::ops::Range<usize>,
    pub placeholder: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicalized {
    pub text: String,
    pub substitutions: Vec<Substitution>,
}

impl Lexicalized {
    /// Puts the placeholders back.
    pub fn skeleton(&self) -> String {
        let mut out = self.text.clone();
        for s in self.substitutions.iter().rev() {
            out.replace_range(s.range.clone(), &s.placeholder);
        }
        out
    }
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[value_([a-z0-9_]+)\]").expect("valid regex"))
}

/// Attribute names to try for a placeholder suffix.
fn field_candidates(name: &str) -> &[&str] {
    match name {
        "price" => &["pricerange", "price"],
        "leave" => &["leave", "leaveat"],
        "arrive" => &["arrive", "arriveby"],
        "id" => &["id", "trainid"],
        _ => &[],
    }
}

fn resolve(name: &str, ctx: &LexContext) -> Option<String> {
    match name {
        "choice" => return Some(ctx.entities.len().to_string()),
        "reference" => return ctx.reference.map(str::to_string),
        _ => {}
    }
    if let Some(first) = ctx.entities.first() {
        let direct = first.get(name);
        let aliased = || field_candidates(name).iter().find_map(|f| first.get(f));
        if let Some(v) = direct.or_else(aliased) {
            return Some(v.to_string());
        }
    }
    ctx.domain
        .and_then(|d| ctx.state.lookup(d, name))
        .map(|v| v.to_string())
}

/// Replaces `[value_x]` placeholders. Attributes come from the first entity,
/// then from the state of the active domain; unresolved placeholders stay.
pub fn lexicalize(delex: &str, ctx: &LexContext) -> Lexicalized {
    let mut text = String::with_capacity(delex.len());
    let mut substitutions = Vec::new();
    let mut last = 0;
    for cap in placeholder_re().captures_iter(delex) {
        let whole = cap.get(0).expect("group 0");
        let Some(value) = resolve(&cap[1], ctx) else {
            continue;
        };
        text.push_str(&delex[last..whole.start()]);
        let start = text.len();
        text.push_str(&value);
        substitutions.push(Substitution {
            range: start..text.len(),
            placeholder: whole.as_str().to_string(),
        });
        last = whole.end();
    }
    text.push_str(&delex[last..]);
    Lexicalized { text, substitutions }
}

/// Placeholder names (without `[value_` and `]`) in order of appearance.
pub fn placeholders(text: &str) -> impl Iterator<Item = &str> {
    placeholder_re()
        .captures_iter(text)
        .map(|c| c.get(1).expect("group 1").as_str())
}
