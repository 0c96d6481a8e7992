//! deco-mamba core: a small CPU tensor engine with reverse-mode gradients,
//! the segmentation network built on it (co-attention gating, 2-D selective
//! scan, deformable refinement), windowed-distribution supervision losses,
//! synthetic data, and evaluation metrics.

pub mod array;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod param;

pub mod nn;
pub mod ssm;

pub mod data;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod optim;
pub mod suite;

pub use array::{Array, DType, Scalar};
pub use graph::{Graph, Var};
pub use param::{ParamId, ParamStore};
