//! Attention-gated affine coupling flows for out-of-distribution detection.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: tensors, dense/conv layers, a small reverse-mode tape,
//!   a finite-difference oracle and Adam.
//! - [`flow`]: the coupling flow itself. Every block takes an explicit gate
//!   value `c ∈ {0, 1}`; at `c = 0` the model degenerates to a fixed
//!   permutation with zero log-determinant.
//! - [`attention`]: the gate. Samples are encoded, compared to a retained
//!   in-distribution reference with an unbiased MMD² statistic, and a
//!   permutation test decides `c`.
//! - [`scoring`]: the likelihood threshold, OOD labelling and the usual
//!   threshold-free metrics (AUCROC, FPR95, AUCPR) plus histogram export.
//! - [`data`]: synthetic generators, IDX/CSV containers and corruptions.
//!
//! Data-parallel loops (batch scoring, gradient accumulation, permutation
//! tests) go through [`Exec`]. With the `parallel` feature they run on rayon;
//! without it, or with [`Exec::Sequential`], they run in order. Both paths
//! reduce in a fixed order and return bit-identical results.

pub mod attention;
pub mod data;
mod error;
mod exec;
pub mod flow;
pub mod fsio;
pub mod numerics;
pub mod rng;
pub mod scoring;

pub use error::{Error, Result};
pub use exec::Exec;
