//! The gated coupling flow: channel split, affine coupling blocks with an
//! explicit gate `c`, fixed inter-block permutations, exact log-determinant,
//! likelihood, maximum-likelihood training and checkpoints.
//!
//! With the gate closed every block is the identity, so `f(x)` is a fixed
//! permutation of `x`, the log-determinant is zero and the likelihood is the
//! prior density of `x` itself.

mod checkpoint;
mod coupling;
mod model;
mod subnet;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointError, MAGIC, VERSION,
};
pub use coupling::{merge_channels, split_channels, CouplingBlock, SplitSpec};
pub use model::{gaussian_log_density, FlowConfig, FlowModel, FlowOutput, Gate, Permutation, TrainingMeta, CHUNK};
pub use subnet::{Init, SubnetKind, SubnetSpec, TRAIN_FINAL_BIAS};
pub use train::{train, TrainConfig, TrainReport};
