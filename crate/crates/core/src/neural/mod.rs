//! Dense networks with analytic gradients, Adam, positional encodings, and
//! the neural expression basis.

mod adam;
mod deformer;
mod encoding;
pub mod hashgrid;
mod mlp;

pub use adam::{AdamConfig, AdamState};
pub use deformer::{
    basis_rms, pretrain_deformer, Deformer, PretrainConfig, PretrainOutcome, DEFAULT_HIDDEN, DEFAULT_ITERATIONS, DEFAULT_LR,
    DEFAULT_SOFTPLUS_BETA,
};
pub use encoding::SinusoidalEncoding;
pub use hashgrid::{active_levels_at, HashGrid};
pub use mlp::{sigmoid, Activation, Dense, GradWorkspace, Mlp, MlpGrads};
