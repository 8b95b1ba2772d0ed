//! Clustering chain (embedding, PCA, K-Means, representative retrieval) and
//! named-entity frequency tables.

mod embed;
mod kmeans;
mod ner;
mod pca;

pub use embed::{EmbeddingMatrix, EmbeddingProvider, HashedEmbedder, BASELINE_DIM};
pub use kmeans::{kmeans, kmeans_best_of, representatives, representatives_in, ClusterModel, KMeansConfig};
pub use ner::{
    entity_frequencies, EntityClass, EntityMention, EntityTagger, HeuristicTagger, TermCount,
};
pub use pca::{pca_fit_transform, PcaModel};

use crate::sidecar::SidecarError;

pub const DEFAULT_PCA_DIM: usize = 30;
pub const DEFAULT_CLUSTERS: usize = 15;
pub const DEFAULT_REPRESENTATIVES: usize = 30;
pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, thiserror::Error)]
pub enum ContentError {
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("embedding cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
