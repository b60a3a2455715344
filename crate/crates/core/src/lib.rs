//! Vocabulary-space creativity tests for language models.
//!
//! The crate administers the DAT, CDAT, PACE, RAT and DRAT to
//! chat-completion endpoints, scores responses under one or more embedding
//! spaces, and measures how well each test predicts external creative
//! achievement benchmarks (validity), how much of that survives once general
//! capability is regressed out (specificity), and the ceiling the two can
//! jointly reach.
//!
//! Module map:
//!
//! * [`embedding`]: vector providers and the cosine kernels.
//! * [`scoring`]: the five test scores and per-model aggregation.
//! * [`gating`]: Welch's t-test, Benjamini–Hochberg, and the CDAT gate.
//! * [`anchors`]: DRAT anchor banks and random-noun pools.
//! * [`admin`]: prompt templates, response parsing, sessions, trial store.
//! * [`stats`]: correlations, OLS, semi-partials, the frontier, nested F.
//! * [`greedy`]: the greedy DAT maximizer baseline.
//! * [`report`]: benchmark ingestion, validity tables, frontier export.

pub mod admin;
pub mod anchors;
pub mod data;
pub mod embedding;
pub mod gating;
pub mod greedy;
pub mod report;
pub mod scoring;
pub mod stats;

pub use embedding::{cosine_similarity, pairwise_mean_distance, Embedder, TermVector};
pub use scoring::{AnchorSet, Chain, RatItem, ScoreAggregate, WordResponse};
pub use stats::{CorrelationCell, FrontierCurve, PairedSeries};
