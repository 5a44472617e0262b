//! Subgraph aggregation for out-of-distribution graph classification.
//!
//! A set of invariant GNNs is trained jointly from one shared
//! initialisation, each on its own randomly edge-dropped view of every
//! graph, with a penalty on the overlap of their predicted edge weights.
//! The learned subgraphs are then combined either by merging edge weights
//! and voting ([`aggregate::ens_predict`]) or by averaging parameters
//! ([`aggregate::weight_average`]).

pub mod aggregate;
pub mod error;
pub mod graph;
pub mod harness;
pub mod model;
pub mod objective;
mod seeds;
pub mod synthgen;
pub mod tensor;
pub mod trainer;

pub use error::{Result, SugarError};
pub use graph::{EdgeWeights, Graph, SubgraphSelection};
pub use model::{InvariantGNN, ModelConfig, ParamStore};
