//! The gate `c(·)`: a fixed random encoder, an RBF kernel with a median
//! bandwidth, the unbiased MMD² statistic and a permutation test against a
//! retained in-distribution reference batch.

mod encoder;
mod gate;
mod kernel;
mod mmd;

pub use encoder::{Encoder, EncoderKind};
pub use gate::{attention_gate, AttentionConfig, AttentionGate};
pub use kernel::{median_bandwidth, rbf_kernel, Bandwidth};
pub use mmd::{mmd_u2, permutation_test, AttentionVerdict, PooledGram};
