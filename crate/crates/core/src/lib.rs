//! Training engine for graph collaborative filtering with rate-reduction
//! objectives.
//!
//! The pipeline: [`dataset`] ingests and splits interactions and builds the
//! normalized bipartite operator; [`encoder`] propagates embeddings over it;
//! [`objectives`] scores the normalized outputs; [`clustering`] supplies the
//! memberships the per-cluster rate needs; [`trainer`] runs the epoch loop;
//! [`evaluator`] and [`diagnostics`] measure ranking quality and spectral
//! collapse.

pub mod clustering;
pub mod dataset;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod objectives;
pub mod snapshot;
pub mod synthetic;
pub mod trainer;

pub use dataset::{InteractionSet, NormalizedAdjacency, SplitDataset};
pub use encoder::{EmbeddingTable, ForwardCache, Pooling};
pub use error::{Error, Result};
pub use trainer::{EpochReport, Objective, TrainConfig, Trainer};
