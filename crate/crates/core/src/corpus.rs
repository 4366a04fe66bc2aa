//! Corpus files, MultiWOZ conversion and low-resource subsampling.
//!
//! A corpus file is UTF-8 JSON:
//!
//! ```json
//! {
//!   "schema": {"domains": [{"name": "hotel", "slots": ["stars", "area"]}]},
//!   "dialogues": [{
//!     "id": "mul0113",
//!     "goal": {
//!       "constraints": [["hotel", "stars", "3"]],
//!       "requestables": {"hotel": ["phone"]},
//!       "booking_required": ["hotel"]
//!     },
//!     "turns": [{
//!       "user": "i need a 3 star hotel .",
//!       "system": "[value_name] is a [value_stars] star hotel .",
//!       "state": [["hotel", "stars", "3"]],
//!       "book_outcome": "fail"
//!     }]
//!   }]
//! }
//! ```
//!
//! Each turn is one user utterance followed by one delexicalized system
//! response, so turns alternate user/system by construction. States are
//! stored in full; per-turn diffs are always derived.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::parse_full_state;
use crate::state::{
    validate_state, BookingOutcome, Dialogue, DialogueState, DomainSpec, Goal, Schema, SlotKey, Turn,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("dialogue {dialogue}{}: {detail}", turn.map(|t| format!(" turn {t}")).unwrap_or_default())]
    Invalid {
        dialogue: String,
        turn: Option<usize>,
        detail: String,
    },
    #[error("cannot sample {requested} dialogues from {available}")]
    SampleTooLarge { requested: usize, available: usize },
}

impl CorpusError {
    pub fn is_io(&self) -> bool {
        matches!(self, CorpusError::Io { .. })
    }
}

type Triple = (String, String, String);

#[derive(Debug, Serialize, Deserialize)]
struct CorpusFile {
    schema: Schema,
    dialogues: Vec<DialogueRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DialogueRecord {
    id: String,
    #[serde(default)]
    goal: GoalRecord,
    turns: Vec<TurnRecord>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct GoalRecord {
    #[serde(default)]
    constraints: Vec<Triple>,
    #[serde(default)]
    requestables: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    booking_required: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TurnRecord {
    user: String,
    system: String,
    state: Vec<Triple>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    book_outcome: Option<BookingOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub schema: Schema,
    pub dialogues: Vec<Dialogue>,
}

fn invalid(dialogue: &str, turn: Option<usize>, detail: impl Into<String>) -> CorpusError {
    CorpusError::Invalid {
        dialogue: dialogue.to_string(),
        turn,
        detail: detail.into(),
    }
}

fn state_from(triples: Vec<Triple>, schema: &Schema, id: &str, turn: Option<usize>) -> Result<DialogueState, CorpusError> {
    let state = DialogueState::from_triples(triples).map_err(|e| invalid(id, turn, e.to_string()))?;
    validate_state(&state, schema).map_err(|bad| {
        let keys: Vec<String> = bad.iter().map(SlotKey::to_string).collect();
        invalid(id, turn, format!("keys not in schema: {}", keys.join(", ")))
    })?;
    Ok(state)
}

impl Corpus {
    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let file: CorpusFile = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let schema = file.schema;
        let mut seen = HashSet::new();
        let mut dialogues = Vec::with_capacity(file.dialogues.len());
        for rec in file.dialogues {
            let id = rec.id;
            if !seen.insert(id.clone()) {
                return Err(invalid(&id, None, "duplicate dialogue id"));
            }
            let constraints = state_from(rec.goal.constraints, &schema, &id, None)?;
            for d in rec.goal.requestables.keys().chain(&rec.goal.booking_required) {
                if !schema.has_domain(d) {
                    return Err(invalid(&id, None, format!("goal names unknown domain {d:?}")));
                }
            }
            let goal = Goal {
                constraints,
                requestables: rec
                    .goal
                    .requestables
                    .into_iter()
                    .map(|(d, r)| (d, r.into_iter().collect()))
                    .collect(),
                booking_required: rec.goal.booking_required.into_iter().collect(),
            };
            let mut turns = Vec::with_capacity(rec.turns.len());
            for (i, t) in rec.turns.into_iter().enumerate() {
                turns.push(Turn {
                    user_utterance: t.user,
                    gold_delex_response: t.system,
                    gold_state: state_from(t.state, &schema, &id, Some(i + 1))?,
                    gold_book_outcome: t.book_outcome,
                });
            }
            dialogues.push(Dialogue::new(id.clone(), turns, goal).map_err(|e| invalid(&id, None, e.to_string()))?);
        }
        Ok(Corpus { schema, dialogues })
    }

    pub fn to_json(&self) -> String {
        let file = CorpusFile {
            schema: self.schema.clone(),
            dialogues: self
                .dialogues
                .iter()
                .map(|d| DialogueRecord {
                    id: d.id.clone(),
                    goal: GoalRecord {
                        constraints: d.goal.constraints.to_triples(&self.schema),
                        requestables: d
                            .goal
                            .requestables
                            .iter()
                            .map(|(k, v)| (k.clone(), v.iter().cloned().collect()))
                            .collect(),
                        booking_required: d.goal.booking_required.iter().cloned().collect(),
                    },
                    turns: d
                        .turns
                        .iter()
                        .map(|t| TurnRecord {
                            user: t.user_utterance.clone(),
                            system: t.gold_delex_response.clone(),
                            state: t.gold_state.to_triples(&self.schema),
                            book_outcome: t.gold_book_outcome,
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("corpus always serializes")
    }

    pub fn turn_count(&self) -> usize {
        self.dialogues.iter().map(|d| d.turns.len()).sum()
    }

    pub fn with_dialogues(&self, dialogues: Vec<Dialogue>) -> Corpus {
        Corpus {
            schema: self.schema.clone(),
            dialogues,
        }
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Corpus::from_json(&text)
}

pub fn dump_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    std::fs::write(path, corpus.to_json()).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Low-resource training-set sizes: 5%, 10% and 20% of MultiWOZ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    FivePct,
    TenPct,
    TwentyPct,
}

impl Preset {
    pub fn count(self) -> usize {
        match self {
            Preset::FivePct => 400,
            Preset::TenPct => 800,
            Preset::TwentyPct => 1600,
        }
    }

    pub fn from_percent(pct: u32) -> Option<Self> {
        match pct {
            5 => Some(Preset::FivePct),
            10 => Some(Preset::TenPct),
            20 => Some(Preset::TwentyPct),
            _ => None,
        }
    }
}

/// Uniform sample without replacement, in original order.
pub fn subsample(dialogues: &[Dialogue], count: usize, seed: u64) -> Result<Vec<Dialogue>, CorpusError> {
    if count > dialogues.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: count,
            available: dialogues.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, dialogues.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| dialogues[i].clone()).collect())
}

/// The MultiWOZ schema used by the converter. Slot order follows the
/// belief spans of the preprocessed corpus (`[hotel] stars 5 area centre day sunday`).
pub fn multiwoz_schema() -> Schema {
    Schema::new(vec![
        DomainSpec::new(
            "hotel",
            &["name", "stars", "type", "area", "pricerange", "parking", "internet", "people", "day", "stay"],
        )
        .booking(&["people", "day", "stay"])
        .requestable(&["address", "phone", "postcode", "reference", "price", "id"]),
        DomainSpec::new(
            "restaurant",
            &["food", "pricerange", "area", "people", "day", "time", "name"],
        )
        .booking(&["people", "day", "time"])
        .requestable(&["address", "phone", "postcode", "reference", "price", "id"]),
        DomainSpec::new("attraction", &["area", "type", "name"])
            .requestable(&["address", "phone", "postcode", "price", "id"]),
        DomainSpec::new("train", &["destination", "departure", "day", "arrive", "leave", "people"])
            .booking(&["people"])
            .exempt(&["arrive", "leave"])
            .requestable(&["id", "price", "duration", "reference"]),
        DomainSpec::new("taxi", &["destination", "departure", "arrive", "leave"])
            .without_db()
            .requestable(&["car", "phone"]),
        DomainSpec::new("police", &["name"]).requestable(&["address", "phone", "postcode", "id"]),
        DomainSpec::new("hospital", &["department"]).requestable(&["address", "phone", "postcode", "id"]),
    ])
    .expect("builtin schema is valid")
}

/// Goal and request names in raw MultiWOZ goals mapped onto slot and
/// placeholder names.
fn multiwoz_slot(name: &str) -> String {
    match name.to_lowercase().as_str() {
        "leaveat" => "leave".into(),
        "arriveby" => "arrive".into(),
        "trainid" => "id".into(),
        "car type" => "car".into(),
        "entrance fee" => "price".into(),
        "pricerange" => "price".into(),
        other => other.to_string(),
    }
}

#[derive(Debug, Deserialize)]
struct DamdDialogue {
    #[serde(default)]
    goal: BTreeMap<String, serde_json::Value>,
    log: Vec<DamdTurn>,
}

#[derive(Debug, Deserialize)]
struct DamdTurn {
    user: String,
    resp: String,
    #[serde(default)]
    constraint: String,
}

/// Converts the preprocessed MultiWOZ file (`data_for_damd.json`, an object
/// keyed by dialogue id) into a [`Corpus`] over [`multiwoz_schema`].
///
/// Field mapping:
/// - `log[].user` and `log[].resp` become the user utterance and the gold
///   delexicalized response
/// - `log[].constraint` (a flat belief span) is parsed into the gold state
/// - `goal.<domain>.info` and `goal.<domain>.book` become goal constraints,
///   with `leaveAt`/`arriveBy` renamed to `leave`/`arrive`
/// - `goal.<domain>.reqt` becomes requestables, with `trainID` mapped to
///   `id` and `entrance fee`/`pricerange` mapped to `price`
/// - a non-empty `goal.<domain>.book` marks the domain as needing a booking
/// - booking outcomes are inferred from the gold response: `[value_reference]`
///   means success, the word "unsuccessful" means failure
///
/// Dialogue ids are lowercased and stripped of a `.json` suffix. Goal keys
/// outside the schema are skipped and reported as warnings.
pub fn convert_multiwoz(text: &str) -> Result<(Corpus, Vec<String>), CorpusError> {
    let raw: BTreeMap<String, DamdDialogue> = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let schema = multiwoz_schema();
    let mut warnings = Vec::new();
    let mut dialogues = Vec::with_capacity(raw.len());
    for (raw_id, dial) in raw {
        let id = raw_id.trim_end_matches(".json").to_lowercase();
        let mut goal = Goal::default();
        for (domain, spec) in &dial.goal {
            if !schema.has_domain(domain) {
                if spec.as_object().is_some_and(|o| !o.is_empty()) {
                    warnings.push(format!("{id}: goal domain {domain:?} skipped"));
                }
                continue;
            }
            for section in ["info", "book"] {
                let Some(obj) = spec.get(section).and_then(|v| v.as_object()) else {
                    continue;
                };
                if section == "book" && !obj.is_empty() {
                    goal.booking_required.insert(domain.clone());
                }
                for (k, v) in obj {
                    let slot = match k.to_lowercase().as_str() {
                        "leaveat" => "leave".to_string(),
                        "arriveby" => "arrive".to_string(),
                        other => other.to_string(),
                    };
                    match v.as_str() {
                        Some(value) if schema.has_slot(domain, &slot) => {
                            goal.constraints = std::mem::take(&mut goal.constraints).with(domain, &slot, value);
                        }
                        _ => warnings.push(format!("{id}: goal {domain}.{k} skipped")),
                    }
                }
            }
            if let Some(reqt) = spec.get("reqt").and_then(|v| v.as_array()) {
                let names: BTreeSet<String> = reqt.iter().filter_map(|r| r.as_str()).map(multiwoz_slot).collect();
                if !names.is_empty() {
                    goal.requestables.insert(domain.clone(), names);
                }
            }
        }
        let mut turns = Vec::with_capacity(dial.log.len());
        for (i, t) in dial.log.into_iter().enumerate() {
            let report = parse_full_state(&t.constraint, &schema);
            if !report.is_clean() {
                warnings.push(format!("{id} turn {}: {} state fragments dropped", i + 1, report.diagnostics.len()));
            }
            let outcome = if t.resp.contains("[value_reference]") {
                Some(BookingOutcome::Success)
            } else if t.resp.to_lowercase().contains("unsuccessful") {
                Some(BookingOutcome::Fail)
            } else {
                None
            };
            turns.push(Turn {
                user_utterance: t.user,
                gold_delex_response: t.resp,
                gold_state: report.value,
                gold_book_outcome: outcome,
            });
        }
        dialogues.push(Dialogue::new(id.clone(), turns, goal).map_err(|e| invalid(&id, None, e.to_string()))?);
    }
    Ok((Corpus { schema, dialogues }, warnings))
}
