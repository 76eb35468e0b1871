//! Decompose the difference between two clusterings of the same weighted item
//! population.
//!
//! The Jaccard distance between a baseline clustering and an experiment
//! clustering splits into exact impact metrics (split and merge distance, the
//! affected/unaffected parts of the Jaccard index) and into quality metrics
//! (good/bad splits and merges, good/bad index, delta precision) that are
//! estimated from human judgements of sampled item pairs.
//!
//! The pipeline is:
//!
//! 1. [`model`]: load and index the two clusterings.
//! 2. [`metrics`]: exact per-item metrics and their weighted lifting to sets.
//! 3. [`pairs`]: enumerate vantage-point pairs with their weight and label.
//! 4. [`sampler`]: weighted sampling of pairs with replacement.
//! 5. [`judgements`]: verdict storage, task export and class reweighting.
//! 6. [`estimator`]: point estimates, standard errors and confidence intervals.
//!
//! [`oracle`] computes everything exactly from a complete truth partition and
//! is the referee for the estimators. [`explore`] serves a session over HTTP.

pub mod error;
pub mod estimator;
pub mod explore;
pub mod judgements;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod pairs;
pub mod records;
pub mod sampler;
pub mod session;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{AffectedPartition, ClusteringPair, Item, ItemIx};
