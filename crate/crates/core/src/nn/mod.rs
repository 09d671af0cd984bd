//! Small fixed-architecture networks with hand-written backpropagation.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod policy;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::Checkpoint;
pub use mlp::MlpLayout;
pub use policy::{ActionHead, PolicyNet, Sample, ValueNet};
