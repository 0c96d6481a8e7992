//! Network building blocks: parameterized layers and the decoder's named
//! composites (attention gating, deformable refinement, distribution head).

pub mod deform;
pub mod dist_head;
pub mod gates;
pub mod layers;
pub mod stem;

/// Forward mode. Batch normalization uses batch statistics (and updates its
/// running estimates) in `Train`, and the stored running estimates in `Eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    pub fn is_train(self) -> bool {
        matches!(self, Mode::Train)
    }
}
