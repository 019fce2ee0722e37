use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::DataBatch;
use crate::{Error, Result};

fn rgb_shape(shape: &[usize]) -> Result<(usize, usize)> {
    match *shape {
        [3, h, w] if h > 0 && w > 0 => Ok((h, w)),
        _ => Err(Error::Contract(format!("expected a 3×H×W image shape, got {shape:?}"))),
    }
}

/// Uniform integer pixels in `0..=255` per channel, scaled to `[0, 1]`.
pub fn gen_noise<R: Rng + ?Sized>(n: usize, shape: &[usize], rng: &mut R) -> Result<DataBatch> {
    let (h, w) = rgb_shape(shape)?;
    let data = (0..n * 3 * h * w).map(|_| rng.random_range(0..=255u8) as f32 / 255.0).collect();
    DataBatch::new(shape.to_vec(), data)
}

/// One random level per channel, held constant over the image. The three
/// levels of an image are distinct integers in `0..=255`.
pub fn gen_constant<R: Rng + ?Sized>(n: usize, shape: &[usize], rng: &mut R) -> Result<DataBatch> {
    let (h, w) = rgb_shape(shape)?;
    let plane = h * w;
    let mut data = Vec::with_capacity(n * 3 * plane);
    for _ in 0..n {
        for level in index::sample(rng, 256, 3).iter() {
            data.extend(std::iter::repeat_n(level as f32 / 255.0, plane));
        }
    }
    DataBatch::new(shape.to_vec(), data)
}

/// Equal-weight isotropic Gaussian mixture. Vectors are not clipped.
pub fn gen_gaussian_mixture<R: Rng + ?Sized>(
    n: usize,
    centers: &[Vec<f64>],
    std: f64,
    rng: &mut R,
) -> Result<DataBatch> {
    let Some(first) = centers.first() else {
        return Err(Error::Contract("gaussian mixture needs at least one center".into()));
    };
    let d = first.len();
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(Error::Contract("mixture centers must share a positive dimension".into()));
    }
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::Contract(format!("mixture std must be positive, got {std}")));
    }
    let normal = Normal::new(0.0, std).expect("validated std");
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = &centers[rng.random_range(0..centers.len())];
        data.extend(c.iter().map(|&m| (m + normal.sample(rng)) as f32));
    }
    DataBatch::new(vec![d], data)
}

/// Uniform vectors on the box `[low, high]^dim`.
pub fn gen_uniform_box<R: Rng + ?Sized>(n: usize, dim: usize, low: f64, high: f64, rng: &mut R) -> Result<DataBatch> {
    if dim == 0 || !(low < high) {
        return Err(Error::Contract(format!("bad box: dim {dim}, [{low}, {high}]")));
    }
    let data = (0..n * dim).map(|_| rng.random_range(low..high) as f32).collect();
    DataBatch::new(vec![dim], data)
}

/// Replicates a single grey channel into three identical RGB channels.
pub fn gray_to_rgb(batch: &DataBatch) -> Result<DataBatch> {
    let &[1, h, w] = batch.sample_shape() else {
        return Err(Error::Contract(format!("gray_to_rgb needs 1×H×W samples, got {:?}", batch.sample_shape())));
    };
    let mut data = Vec::with_capacity(batch.data().len() * 3);
    for s in batch.samples() {
        for _ in 0..3 {
            data.extend_from_slice(s);
        }
    }
    DataBatch::new(vec![3, h, w], data)
}
