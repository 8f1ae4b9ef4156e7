//! Probing heads over frozen contextual embeddings.
//!
//! Two diagnostic models sit on top of precomputed, per-layer token
//! embeddings that are never updated:
//!
//! * [`ner_probe`]: scalar layer mix, a per-token feed-forward network and a
//!   linear-chain [`crf`], scored with entity-level F1 that accepts
//!   alternative gold boundaries.
//! * [`nli_probe`]: bilinear relation scores between every premise and
//!   hypothesis token, element-wise max pooling and a softmax over the three
//!   NLI labels.
//!
//! [`relation_analysis`] inspects the pairwise relation vectors of a trained
//! NLI probe with a k-nearest-neighbor same-type analysis.

pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod crf;
pub mod embedstore;
pub mod error;
pub mod ner_probe;
pub mod nli_probe;
pub mod relation_analysis;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result, StoreError};
