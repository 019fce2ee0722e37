//! Numerical substrate: tensors, layer kernels, reverse-mode tape,
//! finite-difference oracle and the Adam optimizer.

mod adam;
mod gradcheck;
mod layers;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, DEFAULT_FD_EPS};
pub use layers::{conv2d_forward, conv_output_size, dense_forward, relu};
pub use tape::{backward, GradientTape, Gradients, ParamId, Var};
pub use tensor::Tensor;

pub(crate) use layers::{conv2d_batch, linear_batch, ConvGeom};
pub(crate) use tape::std_normal_log_density;
