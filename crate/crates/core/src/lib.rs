//! Implicit graph generation from biased random walks.
//!
//! The pipeline: sample second-order random walks from an input graph
//! ([`walker`]), train a recurrent generator against a recurrent critic with
//! a Wasserstein objective and gradient penalty ([`model`], [`trainer`]),
//! count transitions in generated walks and assemble a new graph from the
//! resulting score matrix ([`assembler`]), then compare graphs
//! ([`stats`]) and score held-out links ([`evaluator`]). [`latent`] maps
//! regions of a two-dimensional latent space to the walks they produce, and
//! [`synthetic`] samples reference graphs.

pub mod assembler;
pub mod autodiff;
pub mod error;
pub mod evaluator;
pub mod graph;
pub mod latent;
pub mod model;
pub mod stats;
pub mod synthetic;
pub mod trainer;
pub mod walker;

pub use error::{Error, Result};
pub use graph::{
    edge_overlap, largest_connected_component, load_edge_list, split_edges, EdgeSplit, Graph, LoadedGraph,
};
