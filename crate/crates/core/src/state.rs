//! Schemas, dialogue states, turns, dialogues and goals.
//!
//! A [`DialogueState`] maps `(domain, slot)` keys to normalized, non-empty
//! values. A key that is absent holds the empty value. The [`Schema`] fixes
//! the universe of keys and their canonical order, which every diff and
//! serialization in this crate follows.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateError {
    #[error("invalid name {name:?}: {reason}")]
    InvalidName { name: String, reason: &'static str },
    #[error("duplicate domain {0:?}")]
    DuplicateDomain(String),
    #[error("duplicate slot {slot:?} in domain {domain:?}")]
    DuplicateSlot { domain: String, slot: String },
    #[error("domain {domain:?} lists {slot:?} as {list} but does not track it")]
    UntrackedSlot {
        domain: String,
        slot: String,
        list: &'static str,
    },
    #[error("empty value for {0}")]
    EmptyValue(SlotKey),
    #[error("turn index {index} out of range 1..={len}")]
    TurnOutOfRange { index: usize, len: usize },
    #[error("context window must be at least 1")]
    ZeroWindow,
    #[error("thresholds for {domain:?} must satisfy 0 < T1 < T2 (got {t1}, {t2})")]
    BadThresholds { domain: String, t1: usize, t2: usize },
    #[error("dialogue {0:?} has no turns")]
    NoTurns(String),
    #[error("invalid key {0}")]
    InvalidKey(SlotKey),
}

/// Collapse whitespace runs, trim, and lowercase.
pub fn normalize_value(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A normalized, non-empty slot value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Value(String);

impl Value {
    /// Normalizes `raw`; returns `None` if nothing is left.
    pub fn new(raw: &str) -> Option<Self> {
        let v = normalize_value(raw);
        if v.is_empty() {
            None
        } else {
            Some(Value(v))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ')
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotKey {
    pub domain: String,
    pub slot: String,
}

impl SlotKey {
    pub fn new(domain: impl Into<String>, slot: impl Into<String>) -> Self {
        SlotKey {
            domain: domain.into(),
            slot: slot.into(),
        }
    }
}

impl fmt::Display for SlotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.domain, self.slot)
    }
}

/// One domain of a [`Schema`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    /// Tracked slots in canonical order.
    pub slots: Vec<String>,
    /// Tracked slots that describe a reservation rather than an entity.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub booking_slots: Vec<String>,
    /// Tracked slots that are never used as exact-match query constraints
    /// (times such as `leave`/`arrive`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub match_exempt: Vec<String>,
    /// Entity attributes a user may ask for; placeholders are `[value_<slot>]`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requestable: Vec<String>,
    /// Whether the domain is backed by an entity table.
    #[serde(default = "default_true")]
    pub has_db: bool,
}

fn default_true() -> bool {
    true
}

impl DomainSpec {
    pub fn new(name: &str, slots: &[&str]) -> Self {
        DomainSpec {
            name: name.to_string(),
            slots: slots.iter().map(|s| s.to_string()).collect(),
            booking_slots: Vec::new(),
            match_exempt: Vec::new(),
            requestable: Vec::new(),
            has_db: true,
        }
    }

    pub fn booking(mut self, slots: &[&str]) -> Self {
        self.booking_slots = slots.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn exempt(mut self, slots: &[&str]) -> Self {
        self.match_exempt = slots.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn requestable(mut self, slots: &[&str]) -> Self {
        self.requestable = slots.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn without_db(mut self) -> Self {
        self.has_db = false;
        self
    }

    pub fn is_booking_slot(&self, slot: &str) -> bool {
        self.booking_slots.iter().any(|s| s == slot)
    }

    /// True for slots used as exact-match constraints when querying.
    pub fn is_query_constraint(&self, slot: &str) -> bool {
        self.slots.iter().any(|s| s == slot)
            && !self.is_booking_slot(slot)
            && !self.match_exempt.iter().any(|s| s == slot)
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaDef {
    domains: Vec<DomainSpec>,
}

/// Ordered domains, each with ordered slots.
///
/// Construction rejects names that would collide with the span grammar
/// (segment tokens, `NULL`, bracketed tokens, whitespace).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SchemaDef", into = "SchemaDef")]
pub struct Schema {
    domains: Vec<DomainSpec>,
    index: HashMap<String, (usize, HashMap<String, usize>)>,
}

impl PartialEq for Schema {
    fn eq(&self, other: &Self) -> bool {
        self.domains == other.domains
    }
}

impl Eq for Schema {}

impl From<Schema> for SchemaDef {
    fn from(s: Schema) -> Self {
        SchemaDef { domains: s.domains }
    }
}

impl TryFrom<SchemaDef> for Schema {
    type Error = StateError;

    fn try_from(def: SchemaDef) -> Result<Self, Self::Error> {
        Schema::new(def.domains)
    }
}

fn check_name(name: &str) -> Result<(), StateError> {
    let reason = if name.is_empty() {
        Some("empty")
    } else if name.chars().any(char::is_whitespace) {
        Some("contains whitespace")
    } else if name.contains('[') || name.contains(']') {
        Some("contains a bracket")
    } else if codec::is_reserved_token(name) {
        Some("collides with a segment token")
    } else {
        None
    };
    match reason {
        Some(reason) => Err(StateError::InvalidName {
            name: name.to_string(),
            reason,
        }),
        None => Ok(()),
    }
}

impl Schema {
    pub fn new(domains: Vec<DomainSpec>) -> Result<Self, StateError> {
        let mut index = HashMap::new();
        for (di, d) in domains.iter().enumerate() {
            check_name(&d.name)?;
            let mut slots = HashMap::new();
            for (si, s) in d.slots.iter().enumerate() {
                check_name(s)?;
                if slots.insert(s.clone(), si).is_some() {
                    return Err(StateError::DuplicateSlot {
                        domain: d.name.clone(),
                        slot: s.clone(),
                    });
                }
            }
            for (list, names) in [("booking", &d.booking_slots), ("match-exempt", &d.match_exempt)] {
                if let Some(s) = names.iter().find(|s| !slots.contains_key(*s)) {
                    return Err(StateError::UntrackedSlot {
                        domain: d.name.clone(),
                        slot: s.clone(),
                        list,
                    });
                }
            }
            for r in &d.requestable {
                check_name(r)?;
            }
            if index.insert(d.name.clone(), (di, slots)).is_some() {
                return Err(StateError::DuplicateDomain(d.name.clone()));
            }
        }
        Ok(Schema { domains, index })
    }

    pub fn domains(&self) -> &[DomainSpec] {
        &self.domains
    }

    pub fn domain(&self, name: &str) -> Option<&DomainSpec> {
        self.index.get(name).map(|(i, _)| &self.domains[*i])
    }

    pub fn has_domain(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn has_slot(&self, domain: &str, slot: &str) -> bool {
        self.index
            .get(domain)
            .is_some_and(|(_, slots)| slots.contains_key(slot))
    }

    pub fn contains(&self, key: &SlotKey) -> bool {
        self.has_slot(&key.domain, &key.slot)
    }

    /// Canonical position of a key: `(domain index, slot index)`.
    pub fn position(&self, key: &SlotKey) -> Option<(usize, usize)> {
        let (di, slots) = self.index.get(&key.domain)?;
        slots.get(&key.slot).map(|si| (*di, *si))
    }

    /// All keys in canonical order.
    pub fn keys(&self) -> impl Iterator<Item = SlotKey> + '_ {
        self.domains
            .iter()
            .flat_map(|d| d.slots.iter().map(move |s| SlotKey::new(&d.name, s)))
    }

    pub fn slot_count(&self) -> usize {
        self.domains.iter().map(|d| d.slots.len()).sum()
    }
}

/// Map from `(domain, slot)` to a non-empty value.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct DialogueState {
    entries: BTreeMap<SlotKey, Value>,
}

impl DialogueState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &SlotKey) -> Option<&Value> {
        self.entries.get(key)
    }

    pub fn lookup(&self, domain: &str, slot: &str) -> Option<&Value> {
        self.entries.get(&SlotKey::new(domain, slot))
    }

    pub fn set(&mut self, key: SlotKey, value: Value) -> Option<Value> {
        self.entries.insert(key, value)
    }

    /// Builder-style insert; `raw` is normalized.
    pub fn with(mut self, domain: &str, slot: &str, raw: &str) -> Self {
        let key = SlotKey::new(domain, slot);
        match Value::new(raw) {
            Some(v) => {
                self.entries.insert(key, v);
            }
            None => {
                self.entries.remove(&key);
            }
        }
        self
    }

    pub fn remove(&mut self, key: &SlotKey) -> Option<Value> {
        self.entries.remove(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in key order (not schema order).
    pub fn iter(&self) -> impl Iterator<Item = (&SlotKey, &Value)> {
        self.entries.iter()
    }

    pub fn domain_entries<'a>(&'a self, domain: &'a str) -> impl Iterator<Item = (&'a str, &'a Value)> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _)| k.domain == domain)
            .map(|(k, v)| (k.slot.as_str(), v))
    }

    /// Entries in canonical schema order; keys unknown to the schema are skipped.
    pub fn canonical<'a>(&'a self, schema: &'a Schema) -> impl Iterator<Item = (SlotKey, &'a Value)> + 'a {
        schema
            .keys()
            .filter_map(move |k| self.entries.get(&k).map(|v| (k, v)))
    }

    /// Entries as `(domain, slot, value)` triples in canonical order.
    pub fn to_triples(&self, schema: &Schema) -> Vec<(String, String, String)> {
        self.canonical(schema)
            .map(|(k, v)| (k.domain, k.slot, v.to_string()))
            .collect()
    }

    pub fn from_triples<I, D, S, V>(triples: I) -> Result<Self, StateError>
    where
        I: IntoIterator<Item = (D, S, V)>,
        D: Into<String>,
        S: Into<String>,
        V: AsRef<str>,
    {
        let mut state = DialogueState::new();
        for (d, s, v) in triples {
            let key = SlotKey::new(d, s);
            let value = Value::new(v.as_ref()).ok_or_else(|| StateError::EmptyValue(key.clone()))?;
            state.entries.insert(key, value);
        }
        Ok(state)
    }
}

impl FromIterator<(SlotKey, Value)> for DialogueState {
    fn from_iter<T: IntoIterator<Item = (SlotKey, Value)>>(iter: T) -> Self {
        DialogueState {
            entries: iter.into_iter().collect(),
        }
    }
}

/// Returns the keys of `state` that are not in `schema`, in key order.
/// An empty result means the state is valid.
pub fn validate_state(state: &DialogueState, schema: &Schema) -> Result<(), Vec<SlotKey>> {
    let bad: Vec<SlotKey> = state
        .entries
        .keys()
        .filter(|k| !schema.contains(k))
        .cloned()
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BookingOutcome {
    None,
    Fail,
    Success,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub user_utterance: String,
    pub gold_delex_response: String,
    pub gold_state: DialogueState,
    pub gold_book_outcome: Option<BookingOutcome>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Goal {
    /// Informable constraints the user holds.
    pub constraints: DialogueState,
    pub requestables: BTreeMap<String, BTreeSet<String>>,
    pub booking_required: BTreeSet<String>,
}

impl Goal {
    /// Domains mentioned anywhere in the goal, in schema order.
    pub fn domains(&self, schema: &Schema) -> Vec<String> {
        schema
            .domains()
            .iter()
            .map(|d| d.name.clone())
            .filter(|d| {
                self.constraints.domain_entries(d).next().is_some()
                    || self.requestables.get(d).is_some_and(|r| !r.is_empty())
                    || self.booking_required.contains(d)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
    pub goal: Goal,
}

impl Dialogue {
    pub fn new(id: impl Into<String>, turns: Vec<Turn>, goal: Goal) -> Result<Self, StateError> {
        let id = id.into();
        if turns.is_empty() {
            return Err(StateError::NoTurns(id));
        }
        Ok(Dialogue { id, turns, goal })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speaker {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
}

impl Utterance {
    pub fn user(text: impl Into<String>) -> Self {
        Utterance {
            speaker: Speaker::User,
            text: text.into(),
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Utterance {
            speaker: Speaker::System,
            text: text.into(),
        }
    }
}

/// Builds `U_{t-w}, R_{t-w}, ..., R_{t-1}, U_t` from explicit history.
///
/// `history[i]` is the `(user, system)` pair of turn `i + 1`; turns at or
/// after `current` are ignored.
pub fn window_from_history(history: &[(String, String)], current_user: &str, window: usize) -> Vec<Utterance> {
    let start = history.len().saturating_sub(window);
    let mut out = Vec::with_capacity(2 * (history.len() - start) + 1);
    for (user, system) in &history[start..] {
        out.push(Utterance::user(user.clone()));
        out.push(Utterance::system(system.clone()));
    }
    out.push(Utterance::user(current_user));
    out
}

/// The gold context window ending at 1-based turn `t`.
pub fn context_window(dialogue: &Dialogue, t: usize, window: usize) -> Result<Vec<Utterance>, StateError> {
    if t == 0 || t > dialogue.turns.len() {
        return Err(StateError::TurnOutOfRange {
            index: t,
            len: dialogue.turns.len(),
        });
    }
    let history: Vec<(String, String)> = dialogue.turns[..t - 1]
        .iter()
        .map(|turn| (turn.user_utterance.clone(), turn.gold_delex_response.clone()))
        .collect();
    Ok(window_from_history(&history, &dialogue.turns[t - 1].user_utterance, window))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t1: usize,
    pub t2: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    window: usize,
    thresholds: BTreeMap<String, Thresholds>,
    default_thresholds: Option<Thresholds>,
    pub rng_seed: u64,
}

impl PipelineConfig {
    pub fn new(
        window: usize,
        thresholds: BTreeMap<String, Thresholds>,
        default_thresholds: Option<Thresholds>,
        rng_seed: u64,
    ) -> Result<Self, StateError> {
        if window == 0 {
            return Err(StateError::ZeroWindow);
        }
        let named = thresholds.iter().map(|(d, t)| (d.as_str(), t));
        for (domain, t) in named.chain(default_thresholds.iter().map(|t| ("*", t))) {
            if t.t1 == 0 || t.t1 >= t.t2 {
                return Err(StateError::BadThresholds {
                    domain: domain.to_string(),
                    t1: t.t1,
                    t2: t.t2,
                });
            }
        }
        Ok(PipelineConfig {
            window,
            thresholds,
            default_thresholds,
            rng_seed,
        })
    }

    /// Train uses T1=1, T2=3; every other domain T1=5, T2=10.
    pub fn multiwoz(window: usize, rng_seed: u64) -> Result<Self, StateError> {
        let mut t = BTreeMap::new();
        t.insert("train".to_string(), Thresholds { t1: 1, t2: 3 });
        Self::new(window, t, Some(Thresholds { t1: 5, t2: 10 }), rng_seed)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn with_window(&self, window: usize) -> Result<Self, StateError> {
        if window == 0 {
            return Err(StateError::ZeroWindow);
        }
        Ok(PipelineConfig {
            window,
            ..self.clone()
        })
    }

    pub fn thresholds_for(&self, domain: &str) -> Option<Thresholds> {
        self.thresholds.get(domain).copied().or(self.default_thresholds)
    }
}
