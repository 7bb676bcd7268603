//! Corpus engineering and evaluation for feature extraction from app reviews.
//!
//! The crate turns crowdsourced per-app feature annotations into BIO-labeled
//! token-classification data, selects training instances by distance to
//! per-feature embedding centroids, builds cross-validation fold plans, and
//! scores externally produced predictions.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod conllu;
pub mod embedding;
pub mod humaneval;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod select;
pub mod split;
pub mod stats;
pub mod transfer;

pub use model::{
    extract_spans, normalize, AnnotatedCorpus, Feature, FeatureSet, Label, MatchOn, ModelError, PhraseToken,
    Review, Span, Token,
};
pub use scalar::Scalar;

pub type EmbeddingStore = embedding::EmbeddingStore<f64>;
pub type Centroid = embedding::Centroid<f64>;
pub type PartitionPlan = select::PartitionPlan<f64>;
pub type MetricReport = metrics::MetricReport<f64>;
pub type FoldSummary = metrics::FoldSummary<f64>;
