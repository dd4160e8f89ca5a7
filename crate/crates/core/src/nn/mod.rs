//! Minimal dense neural-network toolkit: matrices, a reverse-mode tape,
//! parameter storage with Adam, and a checkpoint format.

pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod params;
pub mod tensor;

pub use graph::{Graph, Var};
pub use params::{Adam, Gradients, ParamId, ParamStore};
pub use tensor::Mat;
