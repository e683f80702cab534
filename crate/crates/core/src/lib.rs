//! All-norm load balancing in the semi-streaming model.
//!
//! Clients are assigned to adjacent servers in a bipartite graph whose edges
//! arrive as a stream. The solver keeps `O(n polylog n)` words, makes one
//! pass per multiplicative-weights iteration, and returns an assignment whose
//! load vector is within a constant factor of optimal in every `ℓ_p` norm at
//! once.
//!
//! The main entry point is [`run_pipeline`]. The building blocks (greedy
//! b-matchings, nested matching hierarchies, the all-norm oracle, the MWU
//! driver and the rounding step) are public so they can be checked one by one
//! against the exact references in [`baseline`].

pub mod baseline;
pub mod bmatch;
mod error;
pub mod graph;
pub mod hierarchy;
pub mod load;
pub mod mwu;
pub mod oracle;
pub mod pipeline;
pub mod rounding;
pub mod stream;
pub mod vector;

pub use error::{Error, Result};
pub use graph::{Assignment, CapacityProfile, Edge, GraphSpec};
pub use load::{load_vector, lp_norm, LoadVector, NormOrder};
pub use pipeline::{run_pipeline, run_pipeline_with, SolveConfig, SolveReport};
pub use stream::{generate_instance, parse_graph, parse_graph_str, EdgeStream, GeneratorKind, GeneratorParams};
pub use vector::SparseEdgeVector;
