//! Reverse-mode automatic differentiation over dense arrays.

mod array;
mod gradcheck;
mod graph;
pub mod kernels;
mod params;
pub mod rng;

pub use array::Array;
pub use gradcheck::{finite_differences, gradient_check, gradient_check_entrywise, LeafGradients};
pub use graph::{Graph, Mask, NodeId, Op};
pub use params::{ParamId, ParamStore, Parameter};
pub use rng::RandomStream;
