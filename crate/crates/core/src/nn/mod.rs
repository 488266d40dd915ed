//! Minimal neural-network stack with explicit forward caches and manual
//! backprop: exactly the layers the patch encoders and classifier heads
//! need, nothing else. All math is f64; determinism comes from seeded
//! initialization and explicit rng streams for dropout.

mod encoder;
pub mod gradcheck;
mod layers;
mod optim;

pub use encoder::{
    mlp_classifier, resnet18_trunk, tiny_conv_trunk, Backbone, Encoder, EncoderConfig,
    TINY_CONV_WIDTHS,
};
pub use layers::{
    BatchNorm, Cache, Conv2d, Dropout, Feat, GroupNorm, Layer, Linear, MaxPool, Residual, Stack,
};
pub use optim::SgdMomentum;

/// Deterministic access to every learnable parameter of a model, used by the
/// optimizer, momentum updates, serialization, and finite-difference checks.
pub trait ParamAccess {
    fn n_tensors(&self) -> usize;
    fn tensor_len(&self, i: usize) -> usize;
    fn get(&self, i: usize, j: usize) -> f64;
    fn set(&mut self, i: usize, j: usize, v: f64);
}
