//! Counterfactual collaborative reasoning for sequential recommendation.
//!
//! A neural-logic sampler searches for the smallest change to a user's
//! like/dislike history that alters the next item, and the resulting
//! counterfactual sequences are added to the training data of an anchor
//! recommender. The same search explains recommendations, and the
//! explanations are scored by probability of necessity and sufficiency.
//!
//! Modules, bottom up: [`diffcore`] (reverse-mode autodiff, Adam,
//! checkpoints), [`data`] (rating logs, leave-one-out splits, planted-logic
//! corpora), [`logic`] (the NCR model), [`anchor`] (the recommender trait,
//! a recurrent anchor, training), [`sampler`] (Δ search and augmentation),
//! [`eval`], [`explain`] and [`pipeline`].
//!
//! Runnable examples (`cargo run --release --example <name>`):
//!
//! | example | shows |
//! |---|---|
//! | `autodiff_gradcheck` | tape gradients against finite differences, Adam fitting |
//! | `movielens_split` | rating log to split and training windows |
//! | `planted_logic_corpus` | the synthetic corpus and its rules |
//! | `train_ncr` | NCR training and held-out HR/NDCG |
//! | `recurrent_anchor` | the recurrent anchor and its feedback sensitivity |
//! | `counterfactual_augment` | Δ search and accepted counterfactuals |
//! | `kappa_sweep` | acceptance counts against the confidence threshold |
//! | `explain_pn_ps` | explanations with PN, PS and F_NS |
//! | `ranking_metrics` | NDCG/HR and the random-ranking baseline |
//! | `full_pipeline` | every stage end to end |

pub mod anchor;
pub mod data;
pub mod diffcore;
pub mod eval;
pub mod explain;
mod error;
pub mod logic;
pub mod pipeline;
pub mod sampler;
pub mod seed;

pub use error::{Error, Result};
