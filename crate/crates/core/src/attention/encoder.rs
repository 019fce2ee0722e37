use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::data::DataBatch;
use crate::numerics::{conv2d_batch, linear_batch, ConvGeom};
use crate::rng::seeded;
use crate::{Error, Exec, Result};

const CONV_CHANNELS: [usize; 4] = [64, 128, 256, 512];
const CONV_KERNEL: usize = 4;
const CONV_STRIDE: usize = 2;
const ENCODE_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    RandomProjection,
    RandomConv,
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderKind::RandomProjection => "random_projection",
            EncoderKind::RandomConv => "random_conv",
        })
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_projection" => Ok(EncoderKind::RandomProjection),
            "random_conv" => Ok(EncoderKind::RandomConv),
            _ => Err(Error::Config(format!("encoder must be random_projection or random_conv, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    geom: ConvGeom,
    kernel: Vec<f64>,
    bias: Vec<f64>,
}

/// Untrained map from samples to `ℝᵈ` with weights fixed by a seed.
///
/// `RandomProjection` is `x ↦ Wx` with `Wᵢⱼ ~ N(0, 1/d)` on the flattened
/// sample. `RandomConv` stacks 4×4 stride-2 unpadded convolutions with ReLU
/// (64, 128, 256, 512 channels, stopping early once the map is too small
/// for another layer), then flattens into a linear layer.
#[derive(Debug, Clone)]
pub struct Encoder {
    kind: EncoderKind,
    input_shape: Vec<usize>,
    dim: usize,
    convs: Vec<ConvLayer>,
    w: Vec<f64>,
    b: Vec<f64>,
}

fn he_uniform(rng: &mut impl Rng, fan_in: usize, len: usize) -> Vec<f64> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    (0..len).map(|_| dist.sample(rng)).collect()
}

impl Encoder {
    pub fn new(kind: EncoderKind, input_shape: &[usize], dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("encoder dimension must be positive".into()));
        }
        let features: usize = input_shape.iter().product();
        if input_shape.is_empty() || features == 0 {
            return Err(Error::Dimension(format!("bad encoder input shape {input_shape:?}")));
        }
        let mut rng = seeded(seed);
        match kind {
            EncoderKind::RandomProjection => {
                let normal = Normal::new(0.0, (1.0 / dim as f64).sqrt()).expect("positive std");
                let w = (0..dim * features).map(|_| normal.sample(&mut rng)).collect();
                Ok(Self { kind, input_shape: input_shape.to_vec(), dim, convs: Vec::new(), w, b: vec![0.0; dim] })
            }
            EncoderKind::RandomConv => {
                let &[c, h, w] = input_shape else {
                    return Err(Error::Dimension(format!(
                        "random_conv encoder needs C×H×W input, got {input_shape:?}"
                    )));
                };
                let (mut cin, mut hh, mut ww) = (c, h, w);
                let mut convs = Vec::new();
                for &cout in &CONV_CHANNELS {
                    let Ok(geom) = ConvGeom::new(cin, hh, ww, cout, CONV_KERNEL, CONV_KERNEL, CONV_STRIDE, 0) else {
                        break;
                    };
                    let fan_in = cin * CONV_KERNEL * CONV_KERNEL;
                    let kernel = he_uniform(&mut rng, fan_in, cout * fan_in);
                    (cin, hh, ww) = (cout, geom.out_h, geom.out_w);
                    convs.push(ConvLayer { geom, kernel, bias: vec![0.0; cout] });
                }
                let flat = cin * hh * ww;
                let w = he_uniform(&mut rng, flat, dim * flat);
                Ok(Self { kind, input_shape: input_shape.to_vec(), dim, convs, w, b: vec![0.0; dim] })
            }
        }
    }

    pub fn kind(&self) -> EncoderKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Number of convolution layers actually used (0 for projections).
    pub fn conv_layers(&self) -> usize {
        self.convs.len()
    }

    fn encode_rows(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &self.convs {
            h = conv2d_batch(&h, rows, &layer.geom, &layer.kernel, &layer.bias);
            h.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let n = h.len() / rows;
        linear_batch(&h, rows, n, &self.w, &self.b)
    }

    pub fn encode(&self, batch: &DataBatch) -> Result<Vec<Vec<f64>>> {
        self.encode_with(batch, Exec::default())
    }

    /// Encodes every sample; chunks run under `exec` and are reassembled in
    /// order.
    pub fn encode_with(&self, batch: &DataBatch, exec: Exec) -> Result<Vec<Vec<f64>>> {
        if batch.is_empty() {
            return Err(Error::Contract("cannot encode an empty batch".into()));
        }
        if batch.sample_shape() != self.input_shape.as_slice() {
            return Err(Error::Dimension(format!(
                "encoder expects samples of shape {:?}, got {:?}",
                self.input_shape,
                batch.sample_shape()
            )));
        }
        let f = batch.features();
        let n = batch.len();
        let chunks = n.div_ceil(ENCODE_CHUNK);
        let out = exec.map(chunks, |c| {
            let (lo, hi) = (c * ENCODE_CHUNK, ((c + 1) * ENCODE_CHUNK).min(n));
            let x: Vec<f64> = batch.data()[lo * f..hi * f].iter().map(|&v| v as f64).collect();
            self.encode_rows(&x, hi - lo)
        });
        Ok(out.concat().chunks(self.dim).map(<[f64]>::to_vec).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_noise;

    #[test]
    fn projection_is_deterministic_and_linear() {
        let e = Encoder::new(EncoderKind::RandomProjection, &[5], 3, 11).unwrap();
        let batch = DataBatch::from_rows(&[vec![0.1, 0.2, 0.3, 0.4, 0.5], vec![0.0; 5]]).unwrap();
        let a = e.encode(&batch).unwrap();
        let b = Encoder::new(EncoderKind::RandomProjection, &[5], 3, 11).unwrap().encode(&batch).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1], vec![0.0; 3]);
        assert_eq!(a[0].len(), 3);
    }

    #[test]
    fn conv_encoder_maps_cifar_shape_to_32() {
        let e = Encoder::new(EncoderKind::RandomConv, &[3, 32, 32], 32, 0).unwrap();
        assert_eq!(e.conv_layers(), 3);
        let batch = gen_noise(50, &[3, 32, 32], &mut seeded(1)).unwrap();
        let seq = e.encode_with(&batch, Exec::Sequential).unwrap();
        assert_eq!(seq.len(), 50);
        assert!(seq.iter().all(|r| r.len() == 32));
        assert_eq!(seq, e.encode_with(&batch, Exec::Parallel).unwrap());
    }

    #[test]
    fn conv_encoder_on_tiny_images_is_linear_only() {
        let e = Encoder::new(EncoderKind::RandomConv, &[3, 3, 3], 4, 0).unwrap();
        assert_eq!(e.conv_layers(), 0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Encoder::new(EncoderKind::RandomConv, &[4], 32, 0).is_err());
        let e = Encoder::new(EncoderKind::RandomProjection, &[2], 2, 0).unwrap();
        let wrong = DataBatch::from_rows(&[vec![0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(e.encode(&wrong), Err(Error::Dimension(_))));
        let empty = DataBatch::new(vec![2], vec![]).unwrap();
        assert!(matches!(e.encode(&empty), Err(Error::Contract(_))));
    }

    #[test]
    fn kind_round_trips() {
        for k in [EncoderKind::RandomProjection, EncoderKind::RandomConv] {
            assert_eq!(k.to_string().parse::<EncoderKind>().unwrap(), k);
        }
        assert!("pca".parse::<EncoderKind>().is_err());
    }
}
