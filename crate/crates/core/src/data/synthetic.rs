//! Planted-logic corpus: sequences whose next item is a known function of
//! the most recent (trigger item, feedback) pair.
//!
//! Every user's sequence is a run of episodes. An episode is one or more
//! noise items, then a trigger item with a random like/dislike, then the
//! rule's consequence for that (trigger, feedback) pair, which the user
//! likes. With probability `noise_rate` the consequence is replaced by a
//! uniformly drawn noise item. Items never repeat within a user, so a
//! target never appears in its own history.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::movielens::{IdMap, Interaction, Interactions};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub trigger: usize,
    pub liked: bool,
    pub consequence: usize,
}

/// `(trigger, feedback) -> consequence` mapping over a fixed catalog.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTable {
    pub n_items: usize,
    pub rules: Vec<Rule>,
}

impl RuleTable {
    /// Validates pool disjointness: no item may be both a trigger and a
    /// consequence, and every (trigger, feedback) pair has one consequence.
    pub fn new(n_items: usize, mut rules: Vec<Rule>) -> Result<Self> {
        rules.sort_by_key(|r| (r.trigger, r.liked));
        let triggers: BTreeSet<usize> = rules.iter().map(|r| r.trigger).collect();
        let mut seen = BTreeSet::new();
        for r in &rules {
            if r.trigger >= n_items || r.consequence >= n_items {
                return Err(Error::Config(format!("rule item outside catalog of {n_items}")));
            }
            if triggers.contains(&r.consequence) {
                return Err(Error::Config(format!(
                    "item {} is both a trigger and a consequence",
                    r.consequence
                )));
            }
            if !seen.insert((r.trigger, r.liked)) {
                return Err(Error::Config(format!(
                    "duplicate rule for trigger {} (liked={})",
                    r.trigger, r.liked
                )));
            }
        }
        Ok(Self { n_items, rules })
    }

    /// Random table: `n_triggers` triggers, each with a distinct consequence
    /// for like and for dislike. Remaining items form the noise pool.
    pub fn random(n_items: usize, n_triggers: usize, seed: u64) -> Result<Self> {
        if 3 * n_triggers >= n_items {
            return Err(Error::Config(format!(
                "{n_triggers} triggers need more than {} items",
                3 * n_triggers
            )));
        }
        let mut items: Vec<usize> = (0..n_items).collect();
        items.shuffle(&mut seed::rng(seed, "rule-table", 0));
        let rules = (0..n_triggers)
            .flat_map(|k| {
                let trigger = items[k];
                [
                    Rule {
                        trigger,
                        liked: true,
                        consequence: items[n_triggers + 2 * k],
                    },
                    Rule {
                        trigger,
                        liked: false,
                        consequence: items[n_triggers + 2 * k + 1],
                    },
                ]
            })
            .collect();
        Self::new(n_items, rules)
    }

    pub fn consequence(&self, trigger: usize, liked: bool) -> Option<usize> {
        self.rules
            .iter()
            .find(|r| r.trigger == trigger && r.liked == liked)
            .map(|r| r.consequence)
    }

    pub fn triggers(&self) -> BTreeSet<usize> {
        self.rules.iter().map(|r| r.trigger).collect()
    }

    pub fn consequences(&self) -> BTreeSet<usize> {
        self.rules.iter().map(|r| r.consequence).collect()
    }

    /// Rule whose consequence is `item`, if any.
    pub fn rule_for_consequence(&self, item: usize) -> Option<Rule> {
        self.rules.iter().copied().find(|r| r.consequence == item)
    }

    pub fn noise_pool(&self) -> Vec<usize> {
        let t = self.triggers();
        let c = self.consequences();
        (0..self.n_items).filter(|i| !t.contains(i) && !c.contains(i)).collect()
    }

    /// The consequence implied by the most recent trigger in `history`.
    pub fn predict(&self, history: &[usize], feedback: &[bool]) -> Option<usize> {
        let by_pair: BTreeMap<(usize, bool), usize> =
            self.rules.iter().map(|r| ((r.trigger, r.liked), r.consequence)).collect();
        history
            .iter()
            .zip(feedback)
            .rev()
            .find_map(|(&i, &f)| by_pair.get(&(i, f)).copied())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedLogicConfig {
    pub seed: u64,
    pub n_users: usize,
    pub n_items: usize,
    pub n_triggers: usize,
    /// Episodes (noise run, trigger, consequence) per user.
    pub episodes: usize,
    /// Each episode opens with 1..=max_gap noise items.
    pub max_gap: usize,
    /// Probability that a consequence is replaced by a random noise item.
    pub noise_rate: f64,
}

impl Default for PlantedLogicConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_users: 500,
            n_items: 200,
            n_triggers: 30,
            episodes: 4,
            max_gap: 2,
            noise_rate: 0.2,
        }
    }
}

/// Generates the corpus. Ids in the returned log are already dense and the
/// id maps cover the whole catalog.
pub fn generate_planted_logic_corpus(config: &PlantedLogicConfig, rules: &RuleTable) -> Result<Interactions> {
    if !(0.0..=1.0).contains(&config.noise_rate) {
        return Err(Error::Config(format!("noise rate {} outside [0, 1]", config.noise_rate)));
    }
    if rules.n_items != config.n_items {
        return Err(Error::Config("rule table catalog differs from corpus catalog".into()));
    }
    if config.max_gap == 0 || config.episodes == 0 {
        return Err(Error::Config("episodes and max_gap must be positive".into()));
    }
    let triggers: Vec<usize> = rules.triggers().into_iter().collect();
    let noise = rules.noise_pool();
    if triggers.len() < config.episodes {
        return Err(Error::Config(format!(
            "{} episodes need at least as many triggers (have {})",
            config.episodes,
            triggers.len()
        )));
    }
    if noise.len() < config.episodes * (config.max_gap + 1) {
        return Err(Error::Config("noise pool too small for the episode layout".into()));
    }

    let mut rows = Vec::new();
    for user in 0..config.n_users {
        let mut rng = seed::rng(config.seed, "planted-logic-user", user as u64);
        let mut trig = triggers.clone();
        trig.shuffle(&mut rng);
        let mut pool = noise.clone();
        pool.shuffle(&mut rng);
        let mut t = 0i64;
        let mut push = |item: usize, liked: bool, rng: &mut rand_chacha::ChaCha8Rng| {
            let rating = if liked { rng.gen_range(4..=5) } else { rng.gen_range(1..=3) };
            rows.push(Interaction {
                user_id: user as u64,
                item_id: item as u64,
                rating,
                timestamp: 1_000_000_000 + 60 * t,
            });
            t += 1;
        };
        for &trigger in trig.iter().take(config.episodes) {
            let gap = rng.gen_range(1..=config.max_gap);
            for _ in 0..gap {
                let item = pool.pop().expect("pool size checked");
                let liked = rng.gen_bool(0.5);
                push(item, liked, &mut rng);
            }
            let liked = rng.gen_bool(0.5);
            push(trigger, liked, &mut rng);
            let consequence = if rng.gen_bool(config.noise_rate) {
                let k = rng.gen_range(0..pool.len());
                pool.swap_remove(k)
            } else {
                rules.consequence(trigger, liked).expect("every trigger has both rules")
            };
            push(consequence, true, &mut rng);
        }
    }
    Ok(Interactions {
        rows,
        users: IdMap::identity(config.n_users),
        items: IdMap::identity(config.n_items),
    })
}
