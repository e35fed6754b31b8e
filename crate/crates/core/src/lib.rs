//! Recommendation instruction corpora and reranking evaluation.
//!
//! The crate is organised as a pipeline:
//!
//! * [`catalog`] ingests interaction and item metadata, applies k-core
//!   filtering, builds chronological user sequences and evaluation splits.
//! * [`templates`] holds the preference/intention/task-form taxonomy and the
//!   built-in coarse-grained instruction templates.
//! * [`annotator`] fills templates with fine-grained slot contents (partly
//!   produced by a teacher model) and emits instruction corpora.
//! * [`scorer`] scores candidate outputs by log-likelihood and ranks them.
//! * [`matcher`] builds candidate pools (random, hard-retrieved, large).
//! * [`eval`] runs reranking evaluations and reports HR@K / NDCG@K.

pub mod annotator;
pub mod catalog;
pub mod digest;
pub mod eval;
pub mod matcher;
pub mod retry;
pub mod scorer;
pub mod synth;
pub mod templates;

#[cfg(feature = "net")]
pub mod server;

#[cfg(all(feature = "cli", feature = "net"))]
pub mod cli;

pub use catalog::{Catalog, DatasetSplit, InteractionRecord, ItemRecord, UserSequence};
pub use scorer::{LogLikelihood, ScoreRequest, Scorer};
pub use templates::{AspectTags, CoarseTemplate, Registry, RenderedInstruction, SlotName};
