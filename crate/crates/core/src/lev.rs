//! Minimal slot-level edit scripts between dialogue states.
//!
//! [`compute_lev`] emits one [`SlotEdit`] per key whose value differs
//! between two states, grouped per domain in schema order. [`apply_lev`]
//! is the deterministic update: a `Delete` edit removes the key and any
//! other edit upserts it.

use std::fmt;

use thiserror::Error;

use crate::state::{DialogueState, Schema, SlotKey, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LevError {
    #[error("key {0} is not in the schema")]
    UnknownKey(SlotKey),
    #[error("key {0} is edited more than once")]
    DuplicateEdit(SlotKey),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditKind {
    Insert,
    Delete,
    Substitute,
}

impl fmt::Display for EditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EditKind::Insert => "INS",
            EditKind::Delete => "DEL",
            EditKind::Substitute => "SUB",
        })
    }
}

/// New value of a slot. `Delete` is distinct from any text value, including "null".
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EditValue {
    Set(Value),
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SlotEdit {
    pub slot: String,
    pub value: EditValue,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DomainEdits {
    pub domain: String,
    pub edits: Vec<SlotEdit>,
}

/// A canonical edit script: no empty blocks, each key at most once, schema order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LevSpan {
    blocks: Vec<DomainEdits>,
}

impl LevSpan {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a canonical span from edits given in any order.
    pub fn from_edits<I>(edits: I, schema: &Schema) -> Result<Self, LevError>
    where
        I: IntoIterator<Item = (SlotKey, EditValue)>,
    {
        let mut keyed: Vec<((usize, usize), SlotKey, EditValue)> = Vec::new();
        for (key, value) in edits {
            let pos = schema.position(&key).ok_or_else(|| LevError::UnknownKey(key.clone()))?;
            keyed.push((pos, key, value));
        }
        keyed.sort_by_key(|(pos, _, _)| *pos);
        if let Some(w) = keyed.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(LevError::DuplicateEdit(w[0].1.clone()));
        }
        let mut blocks: Vec<DomainEdits> = Vec::new();
        for (_, key, value) in keyed {
            let edit = SlotEdit { slot: key.slot, value };
            match blocks.last_mut() {
                Some(b) if b.domain == key.domain => b.edits.push(edit),
                _ => blocks.push(DomainEdits {
                    domain: key.domain,
                    edits: vec![edit],
                }),
            }
        }
        Ok(LevSpan { blocks })
    }

    pub fn blocks(&self) -> &[DomainEdits] {
        &self.blocks
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Every edit with its full key, in canonical order.
    pub fn edits(&self) -> impl Iterator<Item = (SlotKey, &EditValue)> {
        self.blocks.iter().flat_map(|b| {
            b.edits
                .iter()
                .map(move |e| (SlotKey::new(&b.domain, &e.slot), &e.value))
        })
    }

    /// Domain of the last block, i.e. the last domain touched in schema order.
    pub fn last_domain(&self) -> Option<&str> {
        self.blocks.last().map(|b| b.domain.as_str())
    }
}

pub fn classify_edit(
    prev: &DialogueState,
    next: &DialogueState,
    key: &SlotKey,
    schema: &Schema,
) -> Result<Option<EditKind>, LevError> {
    if !schema.contains(key) {
        return Err(LevError::UnknownKey(key.clone()));
    }
    Ok(match (prev.get(key), next.get(key)) {
        (None, Some(_)) => Some(EditKind::Insert),
        (Some(_), None) => Some(EditKind::Delete),
        (Some(a), Some(b)) if a != b => Some(EditKind::Substitute),
        _ => None,
    })
}

fn check_keys(state: &DialogueState, schema: &Schema) -> Result<(), LevError> {
    match state.iter().find(|(k, _)| !schema.contains(k)) {
        Some((k, _)) => Err(LevError::UnknownKey(k.clone())),
        None => Ok(()),
    }
}

/// The minimal span turning `prev` into `next`.
pub fn compute_lev(prev: &DialogueState, next: &DialogueState, schema: &Schema) -> Result<LevSpan, LevError> {
    check_keys(prev, schema)?;
    check_keys(next, schema)?;
    let mut blocks = Vec::new();
    for domain in schema.domains() {
        let mut edits = Vec::new();
        for slot in &domain.slots {
            let key = SlotKey::new(&domain.name, slot);
            let value = match (prev.get(&key), next.get(&key)) {
                (Some(_), None) => EditValue::Delete,
                (a, Some(b)) if a != Some(b) => EditValue::Set(b.clone()),
                _ => continue,
            };
            edits.push(SlotEdit {
                slot: slot.clone(),
                value,
            });
        }
        if !edits.is_empty() {
            blocks.push(DomainEdits {
                domain: domain.name.clone(),
                edits,
            });
        }
    }
    Ok(LevSpan { blocks })
}

pub fn apply_lev(prev: &DialogueState, lev: &LevSpan, schema: &Schema) -> Result<DialogueState, LevError> {
    let mut next = prev.clone();
    for (key, value) in lev.edits() {
        if !schema.contains(&key) {
            return Err(LevError::UnknownKey(key));
        }
        match value {
            EditValue::Delete => {
                next.remove(&key);
            }
            EditValue::Set(v) => {
                next.set(key, v.clone());
            }
        }
    }
    Ok(next)
}

pub fn edit_count(lev: &LevSpan) -> usize {
    lev.blocks.iter().map(|b| b.edits.len()).sum()
}

/// The domain a turn is about: the last domain whose slots changed, or
/// `carried` when nothing changed (or a state is outside the schema).
pub fn active_domain(
    prev: &DialogueState,
    next: &DialogueState,
    carried: Option<&str>,
    schema: &Schema,
) -> Option<String> {
    compute_lev(prev, next, schema)
        .ok()
        .and_then(|lev| lev.last_domain().map(str::to_string))
        .or_else(|| carried.map(str::to_string))
}

/// [`active_domain`] over a whole sequence of states, starting from empty.
pub fn active_domains(states: &[DialogueState], schema: &Schema) -> Vec<Option<String>> {
    let empty = DialogueState::new();
    let mut out: Vec<Option<String>> = Vec::with_capacity(states.len());
    for (i, state) in states.iter().enumerate() {
        let prev = if i == 0 { &empty } else { &states[i - 1] };
        let carried = out.last().cloned().flatten();
        out.push(active_domain(prev, state, carried.as_deref(), schema));
    }
    out
}
