//! Contrastive graph clustering.
//!
//! Learns node embeddings with a mean-aggregator GNN trained on four
//! contrastive objectives (feature, homophily, multi-level community and
//! temporal), and clusters them with k-means. Temporal graph streams are
//! segmented at change points where frozen-encoder embeddings drift.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix `f64`,
//! which every verification test uses.

pub mod clustering;
pub mod commands;
pub mod contrastive;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod grad;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod scalar;
pub mod synth;
pub mod trainer;

pub use error::{CgcError, Result};
pub use graph::{MergedGraph, Snapshot, StaticGraph, TemporalGraphStream};
pub use scalar::Scalar;

pub type Mat = matrix::Matrix<f64>;
pub type Features = features::FeatureMatrix<f64>;
pub type Params = grad::ParameterSet<f64>;
pub type Mat32 = matrix::Matrix<f32>;
pub type Features32 = features::FeatureMatrix<f32>;
pub type Params32 = grad::ParameterSet<f32>;
