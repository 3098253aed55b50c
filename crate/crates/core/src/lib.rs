//! Compute-reuse compression for binary convolution layers.
//!
//! Output channels of a binary convolution are vertices of a complete graph
//! weighted by the Hamming distance between their weight sets. Evaluating the
//! channels along a minimum spanning tree of that graph lets every channel but
//! the root reuse its parent's popcount and touch only the weights that differ.

pub mod baselines;
pub mod bits;
pub mod error;
pub mod format;
pub mod graph;
pub mod layer;
pub mod schedule;
pub mod simulate;
pub mod train;

pub use bits::{sign_binarize, BitVec};
pub use error::{Error, Result};
pub use graph::{build_distance_graph, prim_mst, reroot_min_depth, tree_depth, DistanceGraph, SpanningTree};
pub use layer::{hamming, BinaryActivationMap, BinaryLayer, BinaryWeightSet, LayerShape};
