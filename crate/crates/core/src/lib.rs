//! Levenshtein belief spans for dialogue state tracking.
//!
//! The crate covers the whole turn loop of a task-oriented dialogue system
//! built on a text-to-text generator:
//!
//! - [`state`]: schemas, dialogue states, turns and goals
//! - [`lev`]: minimal slot-level diffs between states and their deterministic application
//! - [`codec`]: the flat-text span grammar (`<SOB> [hotel] people 10 <EOB>`)
//! - [`kb`]: entity tables, constraint queries, booking and the 15 KB states
//! - [`metrics`]: joint goal accuracy, Inform, Success, BLEU and Combined
//! - [`pipeline`]: the generator contract, the turn loop, oracles and external generators
//! - [`corpus`]: corpus files, MultiWOZ conversion and low-resource subsampling
//!
//! Generation itself is delegated to anything implementing
//! [`pipeline::Generator`], in process or over a line-delimited JSON
//! protocol.

pub mod cli;
pub mod codec;
pub mod corpus;
pub mod kb;
pub mod lev;
pub mod metrics;
pub mod pipeline;
pub mod state;

pub use codec::{parse_full_state, parse_lev, serialize_full_state, serialize_lev};
pub use lev::{apply_lev, compute_lev, edit_count, EditValue, LevSpan};
pub use state::{DialogueState, DomainSpec, Schema, SlotKey, Value};
