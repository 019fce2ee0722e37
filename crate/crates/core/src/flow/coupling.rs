use std::sync::Arc;

use super::subnet::{Subnet, SubnetKind};
use super::Gate;
use crate::numerics::{GradientTape, ParamId, Tensor, Var};
use crate::{Error, Result};

/// Which features form `u₁` (passed through, fed to `s` and `t`) and which
/// form `u₂` (scaled and shifted).
///
/// Vectors of length `d` put the first `⌈d/2⌉` coordinates in `u₁`. Images
/// put channel 0 in `u₁` and the remaining channels in `u₂`. Either way `u₁`
/// is a leading run of the channel-major flattened sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSpec {
    Vector { dim: usize },
    Channels { channels: usize, height: usize, width: usize },
}

impl SplitSpec {
    pub fn for_shape(shape: &[usize]) -> Result<Self> {
        match *shape {
            [dim] if dim >= 2 => Ok(SplitSpec::Vector { dim }),
            [channels, height, width] if channels >= 2 && height > 0 && width > 0 => {
                Ok(SplitSpec::Channels { channels, height, width })
            }
            _ => Err(Error::Config(format!(
                "cannot split samples of shape {shape:?}: need a vector of length ≥ 2 or an image with ≥ 2 channels"
            ))),
        }
    }

    pub fn sample_shape(&self) -> Vec<usize> {
        match *self {
            SplitSpec::Vector { dim } => vec![dim],
            SplitSpec::Channels { channels, height, width } => vec![channels, height, width],
        }
    }

    pub fn features(&self) -> usize {
        self.sample_shape().iter().product()
    }

    pub fn first_shape(&self) -> Vec<usize> {
        match *self {
            SplitSpec::Vector { dim } => vec![dim.div_ceil(2)],
            SplitSpec::Channels { height, width, .. } => vec![1, height, width],
        }
    }

    pub fn second_shape(&self) -> Vec<usize> {
        match *self {
            SplitSpec::Vector { dim } => vec![dim - dim.div_ceil(2)],
            SplitSpec::Channels { channels, height, width } => vec![channels - 1, height, width],
        }
    }

    pub fn first_len(&self) -> usize {
        self.first_shape().iter().product()
    }

    pub fn second_len(&self) -> usize {
        self.features() - self.first_len()
    }

    /// Units the inter-block permutation shuffles: coordinates or channels.
    pub(crate) fn perm_units(&self) -> usize {
        match *self {
            SplitSpec::Vector { dim } => dim,
            SplitSpec::Channels { channels, .. } => channels,
        }
    }

    pub(crate) fn unit_len(&self) -> usize {
        match *self {
            SplitSpec::Vector { .. } => 1,
            SplitSpec::Channels { height, width, .. } => height * width,
        }
    }

    pub(crate) fn first_units(&self) -> usize {
        self.first_len() / self.unit_len()
    }

    fn ranges(&self) -> (Arc<[usize]>, Arc<[usize]>) {
        let n1 = self.first_len();
        ((0..n1).collect::<Vec<_>>().into(), (n1..self.features()).collect::<Vec<_>>().into())
    }
}

fn batch_dims(x: &Tensor<f64>, spec: &SplitSpec) -> Result<usize> {
    let b = x.shape().first().copied().unwrap_or(0);
    if x.shape().get(1..) != Some(spec.sample_shape().as_slice()) {
        return Err(Error::Dimension(format!("expected [B, {:?}], got {:?}", spec.sample_shape(), x.shape())));
    }
    Ok(b)
}

fn with_batch(b: usize, shape: Vec<usize>) -> Vec<usize> {
    std::iter::once(b).chain(shape).collect()
}

/// Splits a `[B, …]` batch into `(u₁, u₂)`.
pub fn split_channels(u: &Tensor<f64>, spec: &SplitSpec) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let b = batch_dims(u, spec)?;
    let (n, n1) = (spec.features(), spec.first_len());
    let mut u1 = Vec::with_capacity(b * n1);
    let mut u2 = Vec::with_capacity(b * (n - n1));
    for row in u.data().chunks_exact(n) {
        u1.extend_from_slice(&row[..n1]);
        u2.extend_from_slice(&row[n1..]);
    }
    Ok((Tensor::new(with_batch(b, spec.first_shape()), u1)?, Tensor::new(with_batch(b, spec.second_shape()), u2)?))
}

/// Inverse of [`split_channels`].
pub fn merge_channels(u1: &Tensor<f64>, u2: &Tensor<f64>, spec: &SplitSpec) -> Result<Tensor<f64>> {
    let (n1, n2) = (spec.first_len(), spec.second_len());
    let b = u1.numel() / n1;
    if u1.numel() != b * n1 || u2.numel() != b * n2 {
        return Err(Error::Dimension(format!(
            "merge: {} and {} values do not form whole samples of {:?}",
            u1.numel(),
            u2.numel(),
            spec.sample_shape()
        )));
    }
    let mut data = Vec::with_capacity(b * (n1 + n2));
    for (a, c) in u1.data().chunks_exact(n1).zip(u2.data().chunks_exact(n2)) {
        data.extend_from_slice(a);
        data.extend_from_slice(c);
    }
    Tensor::new(with_batch(b, spec.sample_shape()), data)
}

/// One affine coupling block,
/// `v₁ = u₁`, `v₂ = u₂ ⊙ exp(c·s(u₁)) + c·t(u₁)`, with log-determinant
/// `c·Σ s(u₁)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingBlock {
    pub(crate) split: SplitSpec,
    /// `s`, or the shared network with both heads when `t` is `None`.
    pub(crate) s: Subnet,
    pub(crate) t: Option<Subnet>,
}

impl CouplingBlock {
    pub fn split(&self) -> &SplitSpec {
        &self.split
    }

    pub fn is_shared(&self) -> bool {
        self.t.is_none()
    }

    pub fn kind(&self) -> SubnetKind {
        self.s.kind
    }

    /// Records `s(u₁)` and `t(u₁)`.
    pub(crate) fn record_st(&self, tape: &mut GradientTape, params: &[Var], u1: Var) -> Result<(Var, Var)> {
        let out = self.s.record(tape, params, u1)?;
        match &self.t {
            Some(t) => Ok((out, t.record(tape, params, u1)?)),
            None => {
                let n2 = self.split.second_len();
                let shape = self.split.second_shape();
                let s_idx: Arc<[usize]> = (0..n2).collect::<Vec<_>>().into();
                let t_idx: Arc<[usize]> = (n2..2 * n2).collect::<Vec<_>>().into();
                Ok((tape.gather(out, s_idx, &shape)?, tape.gather(out, t_idx, &shape)?))
            }
        }
    }

    /// Records the block. Returns `v` and, when the gate is open, the
    /// per-sample log-determinant `[B, 1]`. A closed gate records nothing:
    /// the block is exactly the identity.
    pub(crate) fn record(
        &self,
        tape: &mut GradientTape,
        params: &[Var],
        u: Var,
        gate: Gate,
    ) -> Result<(Var, Option<Var>)> {
        if gate == Gate::Zero {
            return Ok((u, None));
        }
        let (i1, i2) = self.split.ranges();
        let u1 = tape.gather(u, i1, &self.split.first_shape())?;
        let u2 = tape.gather(u, i2, &self.split.second_shape())?;
        let (s, t) = self.record_st(tape, params, u1)?;
        let scale = tape.exp(s);
        let scaled = tape.mul(u2, scale)?;
        let v2 = tape.add(scaled, t)?;
        let v = tape.concat(u1, v2, &self.split.sample_shape())?;
        let logdet = tape.sum_per_sample(s);
        Ok((v, Some(logdet)))
    }

    /// Evaluates `s(u₁)` and `t(u₁)` for a `[B, …]` batch of `u₁`.
    fn eval_st(&self, params: &[Tensor<f64>], u1: &Tensor<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = GradientTape::new();
        let vars = register(&mut tape, params);
        let x = tape.input(u1.clone());
        let (s, t) = self.record_st(&mut tape, &vars, x)?;
        let (s, t) = (tape.value(s), tape.value(t));
        if !s.is_finite() || !t.is_finite() {
            return Err(Error::NonFinite("subnet output".into()));
        }
        Ok((s.data().to_vec(), t.data().to_vec()))
    }

    /// Forward pass on a `[B, …]` batch: `(v, per-sample log-det)`.
    pub fn forward(&self, params: &[Tensor<f64>], u: &Tensor<f64>, gate: Gate) -> Result<(Tensor<f64>, Vec<f64>)> {
        let b = batch_dims(u, &self.split)?;
        let mut tape = GradientTape::new();
        let vars = register(&mut tape, params);
        let x = tape.input(u.clone());
        let (v, logdet) = self.record(&mut tape, &vars, x, gate)?;
        let v = tape.value(v).clone();
        let logdet = match logdet {
            Some(l) => tape.value(l).data().to_vec(),
            None => vec![0.0; b],
        };
        if !v.is_finite() || logdet.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("coupling block output".into()));
        }
        Ok((v, logdet))
    }

    /// `u₁ = v₁`, `u₂ = (v₂ − c·t(v₁)) ⊙ exp(−c·s(v₁))`.
    pub fn inverse(&self, params: &[Tensor<f64>], v: &Tensor<f64>, gate: Gate) -> Result<Tensor<f64>> {
        batch_dims(v, &self.split)?;
        if gate == Gate::Zero {
            return Ok(v.clone());
        }
        let (v1, v2) = split_channels(v, &self.split)?;
        let (s, t) = self.eval_st(params, &v1)?;
        let u2: Vec<f64> = v2.data().iter().zip(&s).zip(&t).map(|((y, s), t)| (y - t) * (-s).exp()).collect();
        let u2 = Tensor::new(v2.shape().to_vec(), u2)?;
        merge_channels(&v1, &u2, &self.split)
    }
}

/// Puts every parameter on `tape` as `ParamId(i)`.
pub(crate) fn register(tape: &mut GradientTape, params: &[Tensor<f64>]) -> Vec<Var> {
    params.iter().enumerate().map(|(i, p)| tape.param(ParamId(i), p.clone())).collect()
}
