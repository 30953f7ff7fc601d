//! Tab-separated rating logs in the MovieLens `u.data` layout.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: u64,
    pub item_id: u64,
    pub rating: u8,
    pub timestamp: i64,
}

/// Raw identifier to dense index mapping. Dense indices follow ascending
/// raw-id order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<u64>,
    dense: HashMap<u64, usize>,
}

impl IdMap {
    fn from_ids(ids: impl Iterator<Item = u64>) -> Self {
        let mut raw: Vec<u64> = ids.collect();
        raw.sort_unstable();
        raw.dedup();
        let dense = raw.iter().enumerate().map(|(i, &r)| (r, i)).collect();
        Self { raw, dense }
    }

    /// Raw ids `0..n` mapped to themselves.
    pub fn identity(n: usize) -> Self {
        Self::from_ids(0..n as u64)
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn dense(&self, raw: u64) -> Option<usize> {
        self.dense.get(&raw).copied()
    }

    pub fn raw(&self, dense: usize) -> Option<u64> {
        self.raw.get(dense).copied()
    }
}

/// A parsed rating log with its dense id maps.
#[derive(Clone, Debug, Default)]
pub struct Interactions {
    pub rows: Vec<Interaction>,
    pub users: IdMap,
    pub items: IdMap,
}

impl Interactions {
    pub fn new(rows: Vec<Interaction>) -> Self {
        let users = IdMap::from_ids(rows.iter().map(|r| r.user_id));
        let items = IdMap::from_ids(rows.iter().map(|r| r.item_id));
        Self { rows, users, items }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Serializes back into the `user<TAB>item<TAB>rating<TAB>timestamp` layout.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 24);
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", r.user_id, r.item_id, r.rating, r.timestamp);
        }
        out
    }
}

/// Maps a 1-5 star rating to like (`true`, ratings 4-5) or dislike
/// (`false`, ratings 1-3).
pub fn binarize(rating: u8) -> Result<bool> {
    match rating {
        1..=3 => Ok(false),
        4 | 5 => Ok(true),
        r => Err(Error::Domain {
            op: "binarize",
            reason: format!("rating {r} outside 1..=5"),
        }),
    }
}

pub fn parse_line(line: &str) -> std::result::Result<Interaction, String> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split('\t').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 tab-separated fields, found {}", fields.len()));
    }
    let num = |i: usize, name: &str| -> std::result::Result<i64, String> {
        fields[i]
            .trim()
            .parse::<i64>()
            .map_err(|_| format!("invalid {name} `{}`", fields[i]))
    };
    let user = num(0, "user id")?;
    let item = num(1, "item id")?;
    let rating = num(2, "rating")?;
    let timestamp = num(3, "timestamp")?;
    if user < 0 || item < 0 {
        return Err("negative id".into());
    }
    if !(1..=5).contains(&rating) {
        return Err(format!("rating {rating} outside 1..=5"));
    }
    Ok(Interaction {
        user_id: user as u64,
        item_id: item as u64,
        rating: rating as u8,
        timestamp,
    })
}

pub fn parse_interactions(text: &str, source: &str) -> Result<Interactions> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = parse_line(line).map_err(|reason| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            reason,
        })?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: source.to_string(),
            line: 0,
            reason: "no interactions".into(),
        });
    }
    Ok(Interactions::new(rows))
}

pub fn load_interactions(path: &Path) -> Result<Interactions> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(&text, &path.display().to_string())
}
