use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Generator, GeneratorError, TargetMode, TurnKey};
use crate::codec::{serialize_full_state, serialize_lev, DELETE_TOKEN, EOB, SOB};
use crate::kb::KbState;
use crate::lev::{compute_lev, EditValue, LevError, LevSpan};
use crate::state::{Dialogue, DialogueState, Schema, SlotKey, Value};

#[derive(Debug, Clone)]
struct GoldTurn {
    lev: LevSpan,
    state: DialogueState,
    response: String,
}

fn gold_turns(dialogues: &[Dialogue], schema: &Schema) -> Result<HashMap<(String, usize), GoldTurn>, LevError> {
    let mut out = HashMap::new();
    for d in dialogues {
        let mut prev = DialogueState::new();
        for (i, t) in d.turns.iter().enumerate() {
            let lev = compute_lev(&prev, &t.gold_state, schema)?;
            out.insert(
                (d.id.clone(), i + 1),
                GoldTurn {
                    lev,
                    state: t.gold_state.clone(),
                    response: t.gold_delex_response.clone(),
                },
            );
            prev = t.gold_state.clone();
        }
    }
    Ok(out)
}

fn full_span_text(state: &DialogueState, schema: &Schema) -> String {
    let body = serialize_full_state(state, schema);
    if body.is_empty() {
        format!("{SOB} {EOB}")
    } else {
        format!("{SOB} {body} {EOB}")
    }
}

fn lookup<'a>(
    turns: &'a HashMap<(String, usize), GoldTurn>,
    key: TurnKey,
) -> Result<&'a GoldTurn, GeneratorError> {
    turns
        .get(&(key.dialogue_id.to_string(), key.turn))
        .ok_or_else(|| GeneratorError::UnknownTurn {
            dialogue: key.dialogue_id.to_string(),
            turn: key.turn,
        })
}

/// Replays the gold update of each turn and its gold response.
#[derive(Debug, Clone)]
pub struct GoldOracle {
    turns: HashMap<(String, usize), GoldTurn>,
    schema: Schema,
    mode: TargetMode,
}

impl GoldOracle {
    pub fn new(dialogues: &[Dialogue], schema: &Schema, mode: TargetMode) -> Result<Self, LevError> {
        Ok(GoldOracle {
            turns: gold_turns(dialogues, schema)?,
            schema: schema.clone(),
            mode,
        })
    }
}

impl Generator for GoldOracle {
    fn state_request(&mut self, key: TurnKey, _encoded: &str) -> Result<String, GeneratorError> {
        let gold = lookup(&self.turns, key)?;
        Ok(match self.mode {
            TargetMode::Lev => serialize_lev(&gold.lev),
            TargetMode::FullSpan => full_span_text(&gold.state, &self.schema),
        })
    }

    fn response_request(&mut self, key: TurnKey, _encoded: &str, _kb: KbState) -> Result<String, GeneratorError> {
        Ok(lookup(&self.turns, key)?.response.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Corruption {
    DropEdit,
    MangleValue,
    UnknownSlot,
}

/// The gold oracle with one corruption of the Lev span on a fraction of turns.
///
/// Each turn draws from its own stream, seeded by `(seed, dialogue, turn)`,
/// so whether a turn is corrupted does not depend on evaluation order, and
/// the set of corrupted turns at a lower `p` is a subset of the set at a
/// higher `p` for the same seed. Responses are never corrupted.
#[derive(Debug, Clone)]
pub struct NoisyOracle {
    turns: HashMap<(String, usize), GoldTurn>,
    schema: Schema,
    p: f64,
    seed: u64,
}

impl NoisyOracle {
    /// `p` is clamped to `[0, 1]`.
    pub fn new(dialogues: &[Dialogue], schema: &Schema, p: f64, seed: u64) -> Result<Self, LevError> {
        Ok(NoisyOracle {
            turns: gold_turns(dialogues, schema)?,
            schema: schema.clone(),
            p: p.clamp(0.0, 1.0),
            seed,
        })
    }

    fn turn_rng(&self, key: TurnKey) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(key.dialogue_id.as_bytes());
        h.update([0]);
        h.update((key.turn as u64).to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn unknown_slot_name(&self) -> String {
        let mut name = String::from("unknown_slot");
        while self.schema.domains().iter().any(|d| d.slots.contains(&name)) {
            name.push('_');
        }
        name
    }

    fn corrupt(&self, lev: &LevSpan, rng: &mut ChaCha8Rng) -> String {
        let mut edits: Vec<(SlotKey, EditValue)> = lev.edits().map(|(k, v)| (k, v.clone())).collect();
        let kind = if edits.is_empty() {
            Corruption::MangleValue
        } else {
            *[Corruption::DropEdit, Corruption::MangleValue, Corruption::UnknownSlot]
                .choose(rng)
                .expect("non-empty")
        };
        match kind {
            Corruption::DropEdit => {
                edits.remove(rng.gen_range(0..edits.len()));
            }
            Corruption::MangleValue => {
                if edits.is_empty() {
                    let keys: Vec<SlotKey> = self.schema.keys().collect();
                    let key = keys.choose(rng).expect("schemas have slots").clone();
                    edits.push((key, EditValue::Set(Value::new("corrupted").expect("non-empty"))));
                } else {
                    let i = rng.gen_range(0..edits.len());
                    let mangled = match &edits[i].1 {
                        EditValue::Set(v) => format!("{v}x"),
                        EditValue::Delete => "corrupted".to_string(),
                    };
                    edits[i].1 = EditValue::Set(Value::new(&mangled).expect("non-empty"));
                }
            }
            Corruption::UnknownSlot => {
                let target = rng.gen_range(0..edits.len());
                return self.with_unknown_slot(&edits, target);
            }
        }
        let span = LevSpan::from_edits(edits, &self.schema).expect("edits come from a valid span");
        serialize_lev(&span)
    }

    /// Serializes `edits` with the slot name of edit `target` replaced.
    fn with_unknown_slot(&self, edits: &[(SlotKey, EditValue)], target: usize) -> String {
        let unknown = self.unknown_slot_name();
        let mut tokens = vec![SOB.to_string()];
        let mut domain: Option<&str> = None;
        for (i, (key, value)) in edits.iter().enumerate() {
            if domain != Some(key.domain.as_str()) {
                tokens.push(format!("[{}]", key.domain));
                domain = Some(&key.domain);
            }
            tokens.push(if i == target { unknown.clone() } else { key.slot.clone() });
            tokens.push(match value {
                EditValue::Set(v) => v.to_string(),
                EditValue::Delete => DELETE_TOKEN.to_string(),
            });
        }
        tokens.push(EOB.to_string());
        tokens.join(" ")
    }
}

impl Generator for NoisyOracle {
    fn state_request(&mut self, key: TurnKey, _encoded: &str) -> Result<String, GeneratorError> {
        let gold = lookup(&self.turns, key)?;
        let mut rng = self.turn_rng(key);
        let gate: f64 = rng.gen();
        if gate < self.p {
            Ok(self.corrupt(&gold.lev, &mut rng))
        } else {
            Ok(serialize_lev(&gold.lev))
        }
    }

    fn response_request(&mut self, key: TurnKey, _encoded: &str, _kb: KbState) -> Result<String, GeneratorError> {
        Ok(lookup(&self.turns, key)?.response.clone())
    }
}
