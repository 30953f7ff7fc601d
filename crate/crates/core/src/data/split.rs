use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bits;
use super::movielens::{binarize, Interactions};
use super::{Source, TrainingExample};
use crate::error::Result;

/// Users with fewer interactions than this keep everything in train.
pub const MIN_INTERACTIONS_FOR_HOLDOUT: usize = 5;

/// One user's chronologically ordered interactions, with dense ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSequence {
    pub user_id: usize,
    pub items: Vec<usize>,
    #[serde(with = "bits")]
    pub feedback: Vec<bool>,
    pub timestamps: Vec<i64>,
}

impl UserSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn prefix(&self, end: usize) -> UserSequence {
        UserSequence {
            user_id: self.user_id,
            items: self.items[..end].to_vec(),
            feedback: self.feedback[..end].to_vec(),
            timestamps: self.timestamps[..end].to_vec(),
        }
    }
}

/// A held-out positive interaction (validation or test).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldOut {
    pub user_id: usize,
    /// Index of the target in the user's full sequence.
    pub position: usize,
    pub target: usize,
    /// Negative interactions between this target and the next held-out
    /// target (or the end of the sequence).
    pub trailing_negatives: Vec<usize>,
    /// Everything the user did before the target, oldest first.
    pub history: Vec<usize>,
    #[serde(with = "bits")]
    pub history_feedback: Vec<bool>,
}

impl HeldOut {
    /// The `window` most recent history items and their feedback.
    pub fn recent(&self, window: usize) -> (&[usize], &[bool]) {
        let start = self.history.len().saturating_sub(window);
        (&self.history[start..], &self.history_feedback[start..])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<UserSequence>,
    pub validation: Vec<HeldOut>,
    pub test: Vec<HeldOut>,
}

/// Groups interactions by user (dense ids), orders each user's events by
/// timestamp with ties broken by item id, and binarizes ratings.
pub fn build_sequences(data: &Interactions) -> Result<Vec<UserSequence>> {
    let mut per_user: BTreeMap<usize, Vec<(i64, usize, bool)>> = BTreeMap::new();
    for r in &data.rows {
        let u = data.users.dense(r.user_id).expect("user indexed at load");
        let i = data.items.dense(r.item_id).expect("item indexed at load");
        per_user.entry(u).or_default().push((r.timestamp, i, binarize(r.rating)?));
    }
    Ok(per_user
        .into_iter()
        .map(|(user_id, mut events)| {
            events.sort_by_key(|&(ts, item, _)| (ts, item));
            UserSequence {
                user_id,
                items: events.iter().map(|e| e.1).collect(),
                feedback: events.iter().map(|e| e.2).collect(),
                timestamps: events.iter().map(|e| e.0).collect(),
            }
        })
        .collect())
}

fn held_out(seq: &UserSequence, position: usize, end: usize) -> HeldOut {
    HeldOut {
        user_id: seq.user_id,
        position,
        target: seq.items[position],
        trailing_negatives: seq.items[position + 1..end].to_vec(),
        history: seq.items[..position].to_vec(),
        history_feedback: seq.feedback[..position].to_vec(),
    }
}

/// Positive leave-one-out: per user, the last positive interaction and the
/// negatives after it go to test, the previous positive and the negatives
/// up to the test target go to validation, the rest is train.
pub fn split_leave_one_out(sequences: &[UserSequence]) -> DatasetSplit {
    let mut split = DatasetSplit::default();
    for seq in sequences {
        if seq.len() < MIN_INTERACTIONS_FOR_HOLDOUT {
            split.train.push(seq.clone());
            continue;
        }
        let mut positives = seq.feedback.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).rev();
        let Some(test_pos) = positives.next() else {
            split.train.push(seq.clone());
            continue;
        };
        split.test.push(held_out(seq, test_pos, seq.len()));
        let train_end = match positives.next() {
            Some(val_pos) => {
                split.validation.push(held_out(seq, val_pos, test_pos));
                val_pos
            }
            None => test_pos,
        };
        split.train.push(seq.prefix(train_end));
    }
    split
}

/// One example per interaction with at least `window` predecessors in its
/// sequence; shorter prefixes are skipped rather than padded.
pub fn windowize(sequences: &[UserSequence], window: usize) -> Vec<TrainingExample> {
    assert!(window >= 1, "window must be at least 1");
    let mut out = Vec::new();
    for seq in sequences {
        for t in window..seq.len() {
            out.push(TrainingExample {
                user_id: seq.user_id,
                history: seq.items[t - window..t].to_vec(),
                history_feedback: seq.feedback[t - window..t].to_vec(),
                target: seq.items[t],
                source: Source::Original,
                confidence: 1.0,
            });
        }
    }
    out
}
