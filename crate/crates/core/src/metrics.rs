//! Joint goal accuracy, Inform, Success, corpus BLEU and the Combined score.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{self, KnowledgeBase};
use crate::lev::active_domains;
use crate::state::{Dialogue, DialogueState, Schema};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("dialogue {dialogue}: {detail}")]
    Misaligned { dialogue: String, detail: String },
    #[error("no entity table for domain {0:?}, which the goal needs an entity from")]
    MissingKb(String),
}

fn same_len(left: usize, right: usize) -> Result<(), MetricError> {
    if left == right {
        Ok(())
    } else {
        Err(MetricError::LengthMismatch { left, right })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DstReport {
    pub joint_accuracy: f64,
    pub turn_matches: Vec<bool>,
}

/// A turn counts only when the predicted state equals the gold state as a map.
pub fn joint_goal_accuracy(predicted: &[DialogueState], gold: &[DialogueState]) -> Result<DstReport, MetricError> {
    same_len(predicted.len(), gold.len())?;
    let turn_matches: Vec<bool> = predicted.iter().zip(gold).map(|(p, g)| p == g).collect();
    let hits = turn_matches.iter().filter(|m| **m).count();
    let joint_accuracy = if turn_matches.is_empty() {
        0.0
    } else {
        hits as f64 / turn_matches.len() as f64
    };
    Ok(DstReport {
        joint_accuracy,
        turn_matches,
    })
}

/// System side of one dialogue: a delexicalized response and a tracked state per turn.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DialogueOutput {
    pub responses: Vec<String>,
    pub states: Vec<DialogueState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueVerdict {
    pub informed: bool,
    pub successful: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InformSuccess {
    /// Percent of dialogues.
    pub inform: f64,
    pub success: f64,
    pub per_dialogue: Vec<DialogueVerdict>,
}

const ENTITY_PLACEHOLDERS: [&str; 2] = ["name", "id"];

/// Domains whose goal needs an entity: they carry at least one query
/// constraint and are backed by an entity table in the schema.
fn entity_domains(dialogue: &Dialogue, schema: &Schema) -> Vec<String> {
    schema
        .domains()
        .iter()
        .filter(|d| d.has_db)
        .filter(|d| {
            dialogue
                .goal
                .constraints
                .domain_entries(&d.name)
                .any(|(slot, _)| d.is_query_constraint(slot))
        })
        .map(|d| d.name.clone())
        .collect()
}

/// Placeholders the goal asks for in each domain. Booking goals ask for a reference.
fn requested(dialogue: &Dialogue) -> Vec<(String, BTreeSet<String>)> {
    let mut all: std::collections::BTreeMap<String, BTreeSet<String>> = dialogue.goal.requestables.clone();
    for d in &dialogue.goal.booking_required {
        all.entry(d.clone()).or_default().insert("reference".to_string());
    }
    all.into_iter().filter(|(_, s)| !s.is_empty()).collect()
}

fn judge(
    dialogue: &Dialogue,
    output: &DialogueOutput,
    kb: &KnowledgeBase,
    schema: &Schema,
) -> Result<DialogueVerdict, MetricError> {
    if output.responses.len() != output.states.len() {
        return Err(MetricError::Misaligned {
            dialogue: dialogue.id.clone(),
            detail: format!("{} responses for {} states", output.responses.len(), output.states.len()),
        });
    }
    let domains = active_domains(&output.states, schema);
    let mut informed = true;
    for domain in entity_domains(dialogue, schema) {
        if !kb.has_table(&domain) {
            return Err(MetricError::MissingKb(domain));
        }
        let offer_turn = (0..output.responses.len()).rev().find(|&t| {
            domains[t].as_deref() == Some(domain.as_str())
                && kb::placeholders(&output.responses[t]).any(|p| ENTITY_PLACEHOLDERS.contains(&p))
        });
        let hit = offer_turn.is_some_and(|t| {
            let offered: BTreeSet<usize> = kb::query(kb, &output.states[t], &domain, schema)
                .iter()
                .map(|e| e.index)
                .collect();
            kb::query(kb, &dialogue.goal.constraints, &domain, schema)
                .iter()
                .any(|e| offered.contains(&e.index))
        });
        informed &= hit;
    }
    let mut answered = true;
    for (domain, slots) in requested(dialogue) {
        let provided: BTreeSet<&str> = output
            .responses
            .iter()
            .zip(&domains)
            .filter(|(_, d)| d.as_deref() == Some(domain.as_str()))
            .flat_map(|(r, _)| kb::placeholders(r))
            .collect();
        answered &= slots.iter().all(|s| provided.contains(s.as_str()));
    }
    Ok(DialogueVerdict {
        informed,
        successful: informed && answered,
    })
}

/// Inform and Success rates in percent.
///
/// For each goal domain that needs an entity, the offer is the latest turn
/// of that domain whose response has a `[value_name]` or `[value_id]`
/// placeholder. The domain is informed when the entities matching the
/// tracked state at that turn intersect those matching the goal.
/// Success additionally needs every requested attribute to appear as a
/// placeholder in a response of a turn of that domain.
pub fn inform_success(
    dialogues: &[Dialogue],
    outputs: &[DialogueOutput],
    kb: &KnowledgeBase,
    schema: &Schema,
) -> Result<InformSuccess, MetricError> {
    same_len(dialogues.len(), outputs.len())?;
    let per_dialogue = dialogues
        .iter()
        .zip(outputs)
        .map(|(d, o)| judge(d, o, kb, schema))
        .collect::<Result<Vec<_>, _>>()?;
    let pct = |n: usize| {
        if per_dialogue.is_empty() {
            0.0
        } else {
            100.0 * n as f64 / per_dialogue.len() as f64
        }
    };
    Ok(InformSuccess {
        inform: pct(per_dialogue.iter().filter(|v| v.informed).count()),
        success: pct(per_dialogue.iter().filter(|v| v.successful).count()),
        per_dialogue,
    })
}

fn ngram_counts<'a, 'b>(tokens: &'b [&'a str], n: usize) -> HashMap<&'b [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-4 with one reference per candidate, no smoothing,
/// on whitespace tokens. Returns a value in `[0, 100]`.
pub fn corpus_bleu<S: AsRef<str>, T: AsRef<str>>(candidates: &[S], references: &[T]) -> Result<f64, MetricError> {
    same_len(candidates.len(), references.len())?;
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        let ct: Vec<&str> = c.as_ref().split_whitespace().collect();
        let rt: Vec<&str> = r.as_ref().split_whitespace().collect();
        cand_len += ct.len();
        ref_len += rt.len();
        for n in 1..=4 {
            let rc = ngram_counts(&rt, n);
            for (gram, count) in ngram_counts(&ct, n) {
                matched[n - 1] += count.min(rc.get(gram).copied().unwrap_or(0));
                total[n - 1] += count;
            }
        }
    }
    if matched.contains(&0) {
        return Ok(0.0);
    }
    let log_precision: f64 = matched
        .iter()
        .zip(&total)
        .map(|(m, t)| (*m as f64 / *t as f64).ln())
        .sum::<f64>()
        / 4.0;
    let brevity = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * brevity * log_precision.exp())
}

/// `(inform + success) * 0.5 + bleu`, rounded to two decimals.
pub fn combined_score(inform: f64, success: f64, bleu: f64) -> f64 {
    (((inform + success) * 0.5 + bleu) * 100.0).round() / 100.0
}

/// Machine-readable report; absent fields are omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inform: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub combined: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub not: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<f64>,
}

impl Report {
    pub fn fields(&self) -> Vec<(&'static str, f64)> {
        [
            ("joint_acc", self.joint_acc),
            ("inform", self.inform),
            ("success", self.success),
            ("bleu", self.bleu),
            ("combined", self.combined),
            ("not", self.not),
            ("latency_ms", self.latency_ms),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain numbers serialize")
    }

    /// Two-column text table.
    pub fn table(&self) -> String {
        let mut out = String::from("metric       value\n");
        for (k, v) in self.fields() {
            let _ = writeln!(out, "{k:<12} {v:>9.4}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_accuracy_counts_exact_matches() {
        let a = DialogueState::new().with("hotel", "area", "north");
        let b = a.clone().with("hotel", "stars", "4");
        let r = joint_goal_accuracy(&[a.clone(), b.clone()], &[a.clone(), b.clone()]).unwrap();
        assert_eq!(r.joint_accuracy, 1.0);
        let r = joint_goal_accuracy(&[a.clone(), b.clone(), a.clone()], &[a.clone(), b.clone(), b.clone()]).unwrap();
        assert_eq!(r.joint_accuracy, 2.0 / 3.0);
        assert_eq!(r.turn_matches, [true, true, false]);
        // One extra slot is a miss.
        let r = joint_goal_accuracy(std::slice::from_ref(&b), std::slice::from_ref(&a)).unwrap();
        assert_eq!(r.joint_accuracy, 0.0);
        assert!(joint_goal_accuracy(&[a], &[]).is_err());
    }

    #[test]
    fn bleu_identical_is_100() {
        let c = ["the cat sat on the mat", "hello there my good friend"];
        assert_eq!(corpus_bleu(&c, &c).unwrap(), 100.0);
    }

    #[test]
    fn bleu_missing_fourgram_is_zero() {
        assert_eq!(corpus_bleu(&["a b c d"], &["a b c e"]).unwrap(), 0.0);
    }

    #[test]
    fn bleu_length_mismatch() {
        assert!(corpus_bleu(&["a"], &["a", "b"]).is_err());
    }

    #[test]
    fn bleu_brevity_penalty() {
        let refs = ["a b c d e f g h"];
        let full = corpus_bleu(&["a b c d e f g h"], &refs).unwrap();
        let half = corpus_bleu(&["a b c d"], &refs).unwrap();
        assert!(half < full);
        // All precisions are 1, so only the penalty remains: exp(1 - 8/4).
        assert!((half - 100.0 * (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn combined_examples() {
        // Both rows are exact ties at the third decimal; compare in hundredths.
        let hundredths = |x: f64| (x * 100.0).round() as i64;
        assert!((hundredths(combined_score(84.88, 74.91, 17.89)) - 9778).abs() <= 1);
        assert!((hundredths(combined_score(80.04, 72.71, 19.11)) - 9549).abs() <= 1);
        assert_eq!(combined_score(0.0, 0.0, 0.0), 0.0);
    }

    mod inform {
        use super::super::*;
        use crate::state::{DomainSpec, Goal, Turn};

        fn schema() -> Schema {
            Schema::new(vec![
                DomainSpec::new("hotel", &["stars", "area", "people"])
                    .booking(&["people"])
                    .requestable(&["phone"]),
                DomainSpec::new("taxi", &["destination"]).without_db().requestable(&["car"]),
            ])
            .unwrap()
        }

        fn kb() -> KnowledgeBase {
            let mut kb = KnowledgeBase::empty();
            let rows = r#"[{"name": "a", "stars": "3", "area": "north"}, {"name": "b", "stars": "4", "area": "south"}]"#;
            kb.add_table("hotel", rows, "hotel.json", &schema()).unwrap();
            kb
        }

        fn dialogue(goal: Goal, n: usize) -> Dialogue {
            let turn = Turn {
                user_utterance: "u".into(),
                gold_delex_response: "r".into(),
                gold_state: DialogueState::new(),
                gold_book_outcome: None,
            };
            Dialogue::new("d", vec![turn; n], goal).unwrap()
        }

        fn hotel_goal() -> Goal {
            let mut goal = Goal {
                constraints: DialogueState::new().with("hotel", "stars", "3"),
                ..Default::default()
            };
            goal.requestables.entry("hotel".into()).or_default().insert("phone".into());
            goal
        }

        fn run(goal: Goal, responses: &[&str], states: Vec<DialogueState>) -> DialogueVerdict {
            let d = dialogue(goal, responses.len());
            let out = DialogueOutput {
                responses: responses.iter().map(|s| s.to_string()).collect(),
                states,
            };
            inform_success(&[d], &[out], &kb(), &schema()).unwrap().per_dialogue.remove(0)
        }

        #[test]
        fn vacuous_goal_is_successful() {
            let v = run(Goal::default(), &["hello"], vec![DialogueState::new()]);
            assert!(v.informed && v.successful);
        }

        #[test]
        fn no_offer_means_no_inform() {
            let st = DialogueState::new().with("hotel", "stars", "3");
            let v = run(hotel_goal(), &["ok .", "the phone is [value_phone] ."], vec![st.clone(), st]);
            assert!(!v.informed && !v.successful);
        }

        #[test]
        fn consistent_offer_and_answers() {
            let st = DialogueState::new().with("hotel", "stars", "3");
            let v = run(
                hotel_goal(),
                &["[value_name] is nice .", "the phone is [value_phone] ."],
                vec![st.clone(), st],
            );
            assert!(v.informed && v.successful);
        }

        #[test]
        fn inconsistent_offer_fails() {
            let st = DialogueState::new().with("hotel", "stars", "4");
            let v = run(hotel_goal(), &["[value_name] [value_phone]"], vec![st]);
            assert!(!v.informed && !v.successful);
        }

        #[test]
        fn missing_answer_fails_success_only() {
            let st = DialogueState::new().with("hotel", "stars", "3");
            let v = run(hotel_goal(), &["[value_name] is nice ."], vec![st]);
            assert!(v.informed && !v.successful);
        }

        #[test]
        fn missing_table_is_an_error() {
            let d = dialogue(hotel_goal(), 1);
            let out = DialogueOutput {
                responses: vec!["x".into()],
                states: vec![DialogueState::new()],
            };
            let err = inform_success(&[d], &[out], &KnowledgeBase::empty(), &schema()).unwrap_err();
            assert_eq!(err, MetricError::MissingKb("hotel".into()));
        }
    }

    #[test]
    fn report_field_order() {
        let r = Report {
            joint_acc: Some(1.0),
            combined: Some(2.5),
            ..Default::default()
        };
        assert_eq!(r.to_json(), r#"{"joint_acc":1.0,"combined":2.5}"#);
        assert!(r.table().contains("joint_acc"));
    }
}
