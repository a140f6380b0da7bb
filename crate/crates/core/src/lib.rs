//! Graph representation learning with local structural patterns.
//!
//! Nodes are embedded by a neighborhood-aggregation network whose receptive
//! field, neighbor weighting and channel gating are driven by the anonymous
//! random walks sampled around each node.

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod seed;
pub mod train;
pub mod walks;

pub use autodiff::Tensor;
pub use error::{Error, Result};
pub use eval::EvalReport;
pub use graph::{Features, Graph, Labels, NodeId};
pub use model::{ModelConfig, ModelParams};
pub use train::{train, train_graph, TrainConfig, TrainOutput};
pub use walks::{WalkCorpus, WalkParams};
