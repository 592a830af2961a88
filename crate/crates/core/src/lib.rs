//! Automated weak supervision for text classification.
//!
//! A small labeled corpus and a large unlabeled one go in; a pool of
//! labeling functions is fitted and ranked, their votes are aggregated by
//! a label model, a greedy search picks the label model, confidence
//! threshold and LF subset, and a final classifier is trained on the
//! labeled data plus the confidently weak-labeled samples.
//!
//! Module map:
//!
//! - [`corpus`]: datasets, loading, stratified splits;
//! - [`features`]: count / tf-idf vectorizers, embeddings, cosine;
//! - [`classifier`]: logistic regression, naive Bayes, nearest centroid;
//! - [`lf`]: the labeling-function pool;
//! - [`labelmodel`]: label matrix, majority vote, Dawid–Skene, triplet model;
//! - [`search`]: two-stage greedy configuration search;
//! - [`pipeline`]: end-to-end orchestration, config and report;
//! - [`synth`]: planted-parameter generators and brute-force oracles.

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod features;
pub mod labelmodel;
pub mod lf;
pub mod pipeline;
pub mod search;
pub mod synth;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG; `stream` separates independent consumers of one seed.
pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
