//! Privacy-preserving trajectory publishing.
//!
//! Trajectories are encoded as sparse stay-embedding tensors, a small
//! adversarial generator learns to produce new tensors, and generated data is
//! compared with real data along spatial, temporal, semantic and social
//! dimensions.

pub mod embedding;
pub mod gan;
pub mod node_embed;
pub mod semantic;
pub mod similarity;

use thiserror::Error;

use crate::gmm::GmmError;
use crate::grid::{Cell, GridError};
use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PublishError {
    #[error("cell ({}, {}) holds {count} stays, more than the embedding depth", cell.x, cell.y)]
    CellOverflow { cell: Cell, count: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("malformed embedding: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite value at step {step}")]
    Divergence { step: usize },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("vector has length {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
}

pub use embedding::{decode_embedding, embed_trajectory, quantize, EmbeddingEntry, StayEmbedding};
pub use gan::{train_discriminator, train_toy_gan, Flattener, GanConfig, ToyGan};
pub use node_embed::{train_node_embeddings, EmbeddingConfig, EmbeddingSpace, Graph, Node};
pub use semantic::{fit_semantic, purpose_posterior, stay_features, SemanticModel};
pub use similarity::{similarity_report, SimilarityReport};
