//! Reverse-mode differentiation and the autoregressive LSTM shaper.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod gumbel;
pub mod shaper;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gumbel::{gumbel_softmax_sample, GumbelSample, Relaxation};
pub use shaper::{sample_batch, sample_block, shaper_step, Rollout, Shaper, ShaperParams, ShaperState, ShaperVars, StateVars};
pub use tape::{CustomOp, Gradients, Tape, Var};
pub use tensor::Tensor;
