use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::numerics::{GradientTape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubnetKind {
    /// Fully connected layers on the flattened `u₁`.
    Dense,
    /// 3×3, stride 1, padding 1 convolutions; needs image input.
    Conv,
}

impl fmt::Display for SubnetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubnetKind::Dense => "dense",
            SubnetKind::Conv => "conv",
        })
    }
}

impl FromStr for SubnetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(SubnetKind::Dense),
            "conv" => Ok(SubnetKind::Conv),
            other => Err(Error::Config(format!("unknown subnet kind {other:?}"))),
        }
    }
}

/// Architecture of the `s` and `t` networks: the hidden widths (dense) or
/// hidden channel counts (conv). Every layer, the last included, is
/// followed by a ReLU, so outputs are nonnegative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubnetSpec {
    pub kind: SubnetKind,
    pub hidden: Vec<usize>,
}

impl SubnetSpec {
    pub fn dense(hidden: impl Into<Vec<usize>>) -> Self {
        Self { kind: SubnetKind::Dense, hidden: hidden.into() }
    }

    pub fn conv(hidden: impl Into<Vec<usize>>) -> Self {
        Self { kind: SubnetKind::Conv, hidden: hidden.into() }
    }

    /// Two conv layers with 256 hidden channels.
    pub fn image_default() -> Self {
        Self::conv([256])
    }
}

pub(crate) const CONV_KERNEL: usize = 3;

/// How the final layer of each subnet starts out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// Final layer all zeros: every block is the identity, log-det 0.
    /// The final ReLU then sits at its kink and passes no gradient, so this
    /// model cannot be trained from scratch.
    Zero,
    /// Final-layer weights zero and biases [`TRAIN_FINAL_BIAS`]: close to
    /// the identity, with the final ReLU active.
    Train,
    /// He-uniform hidden layers, a narrower uniform final layer and small
    /// positive biases; for tests that need non-trivial `s` and `t`.
    Random,
}

pub const TRAIN_FINAL_BIAS: f32 = 1e-2;

/// One instantiated network; its parameters live in the owning model's
/// parameter list starting at `first_param` (weight, bias per layer).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Subnet {
    pub kind: SubnetKind,
    /// `[input, hidden…, output]` features (dense) or channels (conv).
    pub widths: Vec<usize>,
    pub first_param: usize,
}

impl Subnet {
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.widths
            .windows(2)
            .flat_map(|w| {
                let weight = match self.kind {
                    SubnetKind::Dense => vec![w[1], w[0]],
                    SubnetKind::Conv => vec![w[1], w[0], CONV_KERNEL, CONV_KERNEL],
                };
                [weight, vec![w[1]]]
            })
            .collect()
    }

    pub fn init_params<R: Rng + ?Sized>(&self, init: Init, rng: &mut R) -> Vec<Tensor> {
        let layers = self.widths.len() - 1;
        let mut out = Vec::with_capacity(2 * layers);
        let shapes = self.param_shapes();
        for (l, pair) in shapes.chunks_exact(2).enumerate() {
            let (wshape, bshape) = (&pair[0], &pair[1]);
            let fan_in: usize = wshape[1..].iter().product();
            let last = l + 1 == layers;
            let bound = if last { 0.5 / (fan_in as f64).sqrt() } else { (6.0 / fan_in as f64).sqrt() };
            let mut w = Tensor::zeros(wshape.clone());
            let mut b = Tensor::zeros(bshape.clone());
            if !last || init == Init::Random {
                for v in w.data_mut() {
                    *v = rng.random_range(-bound..bound) as f32;
                }
            }
            match (last, init) {
                (true, Init::Train) => b.data_mut().fill(TRAIN_FINAL_BIAS),
                (_, Init::Random) => {
                    for v in b.data_mut() {
                        *v = rng.random_range(0.0..0.1);
                    }
                }
                _ => {}
            }
            out.push(w);
            out.push(b);
        }
        out
    }

    /// Records the network on `tape`; `params` are the model's parameter
    /// nodes.
    pub fn record(&self, tape: &mut GradientTape, params: &[Var], input: Var) -> Result<Var> {
        let mut h = input;
        for l in 0..self.widths.len() - 1 {
            let w = params[self.first_param + 2 * l];
            let b = params[self.first_param + 2 * l + 1];
            h = match self.kind {
                SubnetKind::Dense => tape.linear(h, w, b)?,
                SubnetKind::Conv => tape.conv2d(h, w, b, 1, 1)?,
            };
            h = tape.relu(h);
        }
        Ok(h)
    }
}
