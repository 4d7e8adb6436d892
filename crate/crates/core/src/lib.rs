//! Detection of reused third-party libraries, and their versions, inside
//! native binaries.
//!
//! The pipeline has five stages:
//!
//! - [`extraction`] turns an ELF file or a feature manifest into a
//!   [`BinaryFeatureSet`]: string literals, exported names, attributed
//!   control-flow graphs (ACFGs) and the function-call graph (FCG).
//! - [`embedding`] maps every ACFG with at least five blocks to a unit-norm
//!   vector with a Structure2vec network trained under a Siamese contrastive
//!   objective.
//! - [`featuredb`] stores library units as library → version → unit →
//!   feature, with an inverted index over basic features and an exact
//!   inner-product vector store.
//! - [`detection`] produces candidates through two channels (basic feature
//!   rules and function retrieval) and filters them by counting common
//!   edges between contracted call graphs.
//! - [`reporting`] aggregates surviving candidates into library verdicts and
//!   picks a version per library.
//!
//! [`evaluation`] holds the metrics, the synthetic ground-truth corpus
//! generator and the ablation runner.

pub mod detection;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod featuredb;
pub mod reporting;

pub use error::{Error, Result};
pub use extraction::{Acfg, BasicBlockAttrs, BinaryFeatureSet, Fcg, FunctionId, Provenance, StringLiteral};
