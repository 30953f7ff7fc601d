mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use ccr::anchor::{rank_top_k, AnchorKind, BatchLoss, PairwiseSample, Recommender};
use ccr::data::synthetic::PlantedLogicConfig;
use ccr::diffcore::{Graph, ParamStore};
use ccr::eval::interacted_items;
use ccr::explain::{
    contexts_from_heldout, evaluate_pn, evaluate_ps, explain_and_score, ExplanationRecord, InterventionMode, UserContext,
};
use ccr::logic::{NcrModel, Vars};
use ccr::sampler::SamplerConfig;
use proptest::prelude::*;

struct Fixture {
    model: NcrModel,
    contexts: Vec<UserContext>,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let corpus = common::planted_corpus(
            PlantedLogicConfig {
                seed: 31,
                n_users: 150,
                episodes: 6,
                max_gap: 1,
                ..Default::default()
            },
            5,
        );
        let model = common::train_ncr(&corpus, 16, 8, 31);
        let contexts = contexts_from_heldout(
            &corpus.split.test[..50],
            &interacted_items(&corpus.sequences),
            corpus.config.n_items,
            5,
            31,
        )
        .unwrap();
        Fixture { model, contexts }
    })
}

fn by_user(contexts: &[UserContext]) -> BTreeMap<usize, UserContext> {
    contexts.iter().map(|c| (c.user, c.clone())).collect()
}

#[test]
fn pn_ps_match_brute_force_in_both_modes() {
    let f = fixture();
    let ctx = by_user(&f.contexts);
    for mode in [InterventionMode::Reverse, InterventionMode::Remove] {
        for n in [1, 5] {
            let (records, report) =
                explain_and_score(&f.model, &f.model, &f.contexts, n, &SamplerConfig::default(), mode, 3).unwrap();
            assert!(!records.is_empty());
            for (sufficiency, ratio) in [(false, report.pn_detail), (true, report.ps_detail)] {
                let (hits, count) = common::brute_force_probability(&records, &f.model, &ctx, n, sufficiency);
                assert_eq!((ratio.hits, ratio.count), (hits, count), "{mode:?} N={n} sufficiency={sufficiency}");
                assert_eq!(ratio.value, (count > 0).then(|| hits as f64 / count as f64));
            }
            assert_eq!(report.k, n);
            if n == 1 {
                let users: BTreeSet<usize> = records.iter().map(|r| r.user_id).collect();
                assert_eq!(users.len(), records.len());
            }
        }
    }
}

#[test]
fn explanations_are_history_subsets() {
    let f = fixture();
    let ctx = by_user(&f.contexts);
    let (records, _) = explain_and_score(
        &f.model,
        &f.model,
        &f.contexts,
        5,
        &SamplerConfig::default(),
        InterventionMode::Reverse,
        3,
    )
    .unwrap();
    for r in &records {
        let c = &ctx[&r.user_id];
        assert!(!r.explanation_items.is_empty());
        assert!(r.explanation_items.iter().all(|i| c.history.contains(i)));
        assert!(rank_top_k(&f.model, c.user, &c.history, &c.feedback, &c.candidates, 5)
            .unwrap()
            .contains(&r.recommended_item));
        assert!(r.alternative_item.is_some());
    }
}

fn top1_records(f: &Fixture, full_history: bool, mode: InterventionMode) -> Vec<ExplanationRecord> {
    f.contexts
        .iter()
        .map(|c| ExplanationRecord {
            user_id: c.user,
            recommended_item: rank_top_k(&f.model, c.user, &c.history, &c.feedback, &c.candidates, 1).unwrap()[0],
            explanation_items: if full_history { c.history.clone() } else { vec![c.history[0]] },
            mode,
            alternative_item: None,
        })
        .collect()
}

#[test]
fn whole_history_explanations_are_sufficient() {
    let f = fixture();
    let ctx = by_user(&f.contexts);
    for mode in [InterventionMode::Reverse, InterventionMode::Remove] {
        let ps = evaluate_ps(&top1_records(f, true, mode), &f.model, &ctx, 1).unwrap();
        assert_eq!(ps.value, Some(1.0));
        assert_eq!(ps.count, f.contexts.len());
    }
}

#[test]
fn cutoff_covering_all_candidates_makes_everything_sufficient() {
    let f = fixture();
    let ctx = by_user(&f.contexts);
    let k = f.contexts[0].candidates.len();
    let records = top1_records(f, false, InterventionMode::Reverse);
    assert_eq!(evaluate_ps(&records, &f.model, &ctx, k).unwrap().value, Some(1.0));
    assert_eq!(evaluate_pn(&records, &f.model, &ctx, k).unwrap().value, Some(0.0));
}

#[test]
fn no_records_means_no_value() {
    let f = fixture();
    let ctx = by_user(&f.contexts);
    let pn = evaluate_pn(&[], &f.model, &ctx, 1).unwrap();
    assert_eq!((pn.hits, pn.count, pn.value), (0, 0, None));
}

#[test]
fn foreign_explanation_items_are_rejected() {
    let f = fixture();
    let ctx = by_user(&f.contexts);
    let mut records = top1_records(f, false, InterventionMode::Reverse);
    records[0].explanation_items = vec![usize::MAX];
    assert!(evaluate_pn(&records, &f.model, &ctx, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn record_order_does_not_matter(perm_seed in any::<u64>(), remove in any::<bool>()) {
        use rand::seq::SliceRandom;
        let f = fixture();
        let ctx = by_user(&f.contexts);
        let mode = if remove { InterventionMode::Remove } else { InterventionMode::Reverse };
        let records: Vec<ExplanationRecord> = top1_records(f, false, mode)
            .into_iter()
            .zip(top1_records(f, true, mode))
            .flat_map(|(a, b)| [a, b])
            .collect();
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut common::rng(perm_seed));
        prop_assert_eq!(evaluate_pn(&records, &f.model, &ctx, 3).unwrap(), evaluate_pn(&shuffled, &f.model, &ctx, 3).unwrap());
        prop_assert_eq!(evaluate_ps(&records, &f.model, &ctx, 3).unwrap(), evaluate_ps(&shuffled, &f.model, &ctx, 3).unwrap());
    }
}

/// Item 0 scores the number of liked history entries, item 1 the number of
/// disliked ones.
struct Tally(ParamStore);

impl Recommender for Tally {
    fn kind(&self) -> AnchorKind {
        AnchorKind::Ncr
    }
    fn n_items(&self) -> usize {
        2
    }
    fn params(&self) -> &ParamStore {
        &self.0
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.0
    }
    fn config_json(&self) -> serde_json::Value {
        serde_json::Value::Null
    }
    fn score_candidates(&self, _: usize, _: &[usize], feedback: &[bool], candidates: &[usize]) -> ccr::Result<Vec<f64>> {
        let liked = feedback.iter().filter(|&&b| b).count() as f64;
        let disliked = feedback.len() as f64 - liked;
        Ok(candidates.iter().map(|&c| if c == 0 { liked } else { disliked }).collect())
    }
    fn batch_loss(&self, _: &mut Graph, _: &Vars, _: &[PairwiseSample<'_>]) -> ccr::Result<BatchLoss> {
        Err(ccr::Error::Contract("not trainable".into()))
    }
}

#[test]
fn reversing_a_decisive_explanation_is_necessary() {
    let anchor = Tally(ParamStore::new());
    let contexts: Vec<UserContext> = (0..4)
        .map(|u| UserContext {
            user: u,
            history: (10..13 + u).collect(),
            feedback: vec![true; 3 + u],
            candidates: vec![0, 1],
        })
        .collect();
    let ctx = by_user(&contexts);
    let records: Vec<ExplanationRecord> = contexts
        .iter()
        .map(|c| ExplanationRecord {
            user_id: c.user,
            recommended_item: 0,
            explanation_items: c.history[..c.history.len() / 2 + 1].to_vec(),
            mode: InterventionMode::Reverse,
            alternative_item: None,
        })
        .collect();
    assert_eq!(evaluate_pn(&records, &anchor, &ctx, 1).unwrap().value, Some(1.0));
    assert_eq!(evaluate_ps(&records, &anchor, &ctx, 1).unwrap().value, Some(1.0));
    let weak: Vec<ExplanationRecord> = records
        .iter()
        .map(|r| ExplanationRecord { explanation_items: r.explanation_items[..1].to_vec(), ..r.clone() })
        .collect();
    assert_eq!(evaluate_pn(&weak, &anchor, &ctx, 1).unwrap().value, Some(0.0));
}
