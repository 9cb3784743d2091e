//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Graph`] is an eager tape: every op computes its value immediately and
//! records how to push gradients back. One graph is built per video per step
//! and thrown away after `backward`. Everything is `f64`; all reductions run
//! in deterministic order, so equal seeds give bit-identical training runs.

mod graph;
mod params;

pub use graph::{Gradients, Graph, NodeId};
pub use params::{ParamId, ParamStore};

use ndarray::Array2;

/// One gradient slot per parameter, in registration order; `None` means the
/// parameter did not participate in the graph.
pub type GradientSet = Vec<Option<Array2<f64>>>;
