//! Decoupled uniformity: a contrastive representation-learning loss that
//! repels per-anchor centroids instead of raw views, plus the machinery
//! needed to study it at desk scale.
//!
//! The loss acts on centroids `mu_i` (one per anchor, each the average of
//! that anchor's augmented views on the unit sphere):
//!
//! ```text
//! L = log( 1/(n(n-1)) * sum_{i != j} exp(-t * ||mu_i - mu_j||^2) )
//! ```
//!
//! Centroids can come straight from view averages ([`loss::view_average_centroids`])
//! or from a kernel ridge estimate that borrows strength across anchors that
//! look alike under a prior embedding ([`loss::kernel_centroids`] with weights
//! `A = (K_n + n*lambda*I)^-1 K_n` from [`kernels::centroid_weights`]).
//!
//! The crate is organized by concern:
//!
//! * [`kernels`]  - Gram matrices, centroid-weight solves, `beta_n` conditioning
//! * [`loss`]     - the loss, its gradients, and alignment/variance diagnostics
//! * [`graphs`]   - augmentation and epsilon-kernel graphs, connectivity, `eps*`
//! * [`encoder`]  - a small MLP with manual backprop and exact l2 output normalization
//! * [`data`]     - synthetic datasets, augmentations, prior embeddings, CSV I/O
//! * [`eval`]     - linear probe, simplex check, bound verification, experiments
//!
//! Everything is `f64`, deterministic given seeds, and sized for datasets of
//! a few thousand anchors at most.

pub mod data;
pub mod encoder;
pub mod eval;
pub mod graphs;
pub mod kernels;
pub mod loss;

mod linalg;

pub use data::{AugmentationKind, AugmentationSpec, Dataset, PriorEmbedding, PriorSource, ViewBatch};
pub use encoder::{
    Activation, CentroidMode, EncoderInit, EncoderParams, ProjectionHead, Schedule, TrainConfig,
};
pub use graphs::{Diameter, Graph, GraphReport};
pub use kernels::{CentroidWeights, KernelMatrix, KernelSpec};
pub use loss::{CentroidSource, Centroids, EmbeddingBatch, LossReport};
