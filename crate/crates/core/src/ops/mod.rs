//! Differentiable primitives recorded on the tape.

pub mod conv;
pub mod elementwise;
pub mod matmul;
pub mod pool;
pub mod reduce;
pub mod resize;
pub mod sample;
pub mod shape_ops;
pub mod softmax;
