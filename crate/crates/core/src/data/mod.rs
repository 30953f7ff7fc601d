//! Rating-log ingestion, leave-one-out splitting, windowing, a synthetic
//! planted-logic corpus, and JSON-lines persistence of training examples.

mod movielens;
mod split;
pub mod synthetic;

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use movielens::{binarize, load_interactions, parse_interactions, parse_line, IdMap, Interaction, Interactions};
pub use split::{
    build_sequences, split_leave_one_out, windowize, DatasetSplit, HeldOut, UserSequence,
    MIN_INTERACTIONS_FOR_HOLDOUT,
};

/// Default history window length.
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Original,
    Counterfactual,
}

/// A fixed-length history and the item that followed it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub user_id: usize,
    pub history: Vec<usize>,
    #[serde(with = "bits")]
    pub history_feedback: Vec<bool>,
    pub target: usize,
    pub source: Source,
    /// 1.0 for originals; the sampler's score for counterfactuals.
    pub confidence: f64,
}

/// Feedback bits serialize as `0`/`1` integers.
pub(crate) mod bits {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[bool], s: S) -> Result<S::Ok, S::Error> {
        let ints: Vec<u8> = v.iter().map(|&b| b as u8).collect();
        ints.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let ints = Vec::<u8>::deserialize(d)?;
        ints.into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(serde::de::Error::custom(format!("feedback bit must be 0 or 1, got {other}"))),
            })
            .collect()
    }
}

const REQUIRED_FIELDS: [&str; 6] = ["user_id", "history", "history_feedback", "target", "source", "confidence"];

pub fn examples_to_jsonl(examples: &[TrainingExample]) -> Result<String> {
    let mut out = Vec::new();
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.push(b'\n');
    }
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

pub fn examples_from_jsonl(text: &str) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::Schema {
            line: line_no,
            field: "<line>".into(),
            reason: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Schema {
            line: line_no,
            field: "<line>".into(),
            reason: "expected a JSON object".into(),
        })?;
        for field in REQUIRED_FIELDS {
            if !obj.contains_key(field) {
                return Err(Error::Schema {
                    line: line_no,
                    field: field.into(),
                    reason: "missing".into(),
                });
            }
        }
        let ex: TrainingExample = serde_json::from_value(value).map_err(|e| Error::Schema {
            line: line_no,
            field: "<line>".into(),
            reason: e.to_string(),
        })?;
        if ex.history.len() != ex.history_feedback.len() {
            return Err(Error::Schema {
                line: line_no,
                field: "history_feedback".into(),
                reason: "length differs from history".into(),
            });
        }
        if !(0.0..=1.0).contains(&ex.confidence) {
            return Err(Error::Schema {
                line: line_no,
                field: "confidence".into(),
                reason: format!("{} outside [0, 1]", ex.confidence),
            });
        }
        out.push(ex);
    }
    Ok(out)
}

pub fn save_examples(path: &Path, examples: &[TrainingExample]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(examples_to_jsonl(examples)?.as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn load_examples(path: &Path) -> Result<Vec<TrainingExample>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    examples_from_jsonl(&text)
}

/// Summary written next to prepared split files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub window: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub train_sequences: usize,
    pub train_examples: usize,
    pub validation: usize,
    pub test: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(confidence: f64, source: Source) -> TrainingExample {
        TrainingExample {
            user_id: 3,
            history: vec![1, 2, 3],
            history_feedback: vec![true, false, true],
            target: 9,
            source,
            confidence,
        }
    }

    #[test]
    fn counterfactual_confidence_survives_round_trip() {
        let ex = example(0.83, Source::Counterfactual);
        let back = examples_from_jsonl(&examples_to_jsonl(&[ex.clone()]).unwrap()).unwrap();
        assert_eq!(back, vec![ex]);
        assert_eq!(back[0].confidence, 0.83);
    }

    #[test]
    fn feedback_is_written_as_integers() {
        let line = examples_to_jsonl(&[example(1.0, Source::Original)]).unwrap();
        assert!(line.contains("\"history_feedback\":[1,0,1]"), "{line}");
        assert!(line.contains("\"source\":\"original\""));
    }

    #[test]
    fn missing_target_names_the_field() {
        let good = examples_to_jsonl(&[example(1.0, Source::Original)]).unwrap();
        let bad = r#"{"user_id":1,"history":[1],"history_feedback":[1],"source":"original","confidence":1.0}"#;
        match examples_from_jsonl(&format!("{good}{bad}\n")) {
            Err(Error::Schema { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "target");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_feedback_bit_is_rejected() {
        let bad = r#"{"user_id":1,"history":[1],"history_feedback":[2],"target":3,"source":"original","confidence":1.0}"#;
        assert!(matches!(examples_from_jsonl(bad), Err(Error::Schema { line: 1, .. })));
    }
}
