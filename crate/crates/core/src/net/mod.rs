//! Full network assembly: configuration, the hierarchical encoder, the
//! six-stage decoder, and complexity counters.

pub mod complexity;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod model;

pub use config::{ConfigError, GateKind, ModelConfig};
pub use decoder::SegOutput;
pub use encoder::FeaturePyramid;
pub use model::Model;
