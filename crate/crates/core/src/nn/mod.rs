//! Dense and recurrent layers with exact backward passes, masked MSE and RMSprop.

mod activation;
mod batchnorm;
mod dense;
mod dropout;
mod gru;
mod layer;
pub mod linalg;
mod loss;
mod lstm;
mod rmsprop;
mod tensor;

pub use activation::{prelu, PRelu, Tanh, PRELU_INIT};
pub use batchnorm::{BatchNorm, BN_EPS, BN_MOMENTUM};
pub use dense::{dense_forward, Dense};
pub use dropout::Dropout;
pub use gru::{gru_cell, Gru, GruParams};
pub use layer::{glorot_uniform, orthogonal, Ctx, Layer, Mode, Param};
pub use loss::masked_mse;
pub use lstm::{Bidirectional, Lstm, FORGET_BIAS};
pub use rmsprop::{clip_global_norm, RmsProp, DEFAULT_EPS, DEFAULT_LR, DEFAULT_RHO};
pub use tensor::{concat_features, reverse_time, split_features, Tensor};

/// RNG used for initialization, dropout masks and shuffling.
pub type Rng = rand_chacha::ChaCha8Rng;
