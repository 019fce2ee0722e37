use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;

use super::coupling::{register, CouplingBlock, SplitSpec};
use super::subnet::{Init, Subnet, SubnetKind, SubnetSpec};
use crate::data::DataBatch;
use crate::numerics::{GradientTape, Gradients, Tensor, Var};
use crate::rng::{seeded, substream};
use crate::{Error, Exec, Result};

/// Samples per tape when scoring or differentiating a batch. Fixed so that
/// the reduction order never depends on the thread count.
pub const CHUNK: usize = 64;

/// The attention value `c` handed to every coupling block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    /// `c = 0`: every block is the identity.
    Zero,
    /// `c = 1`: the blocks transform their input.
    One,
}

impl Gate {
    pub fn value(self) -> f64 {
        match self {
            Gate::Zero => 0.0,
            Gate::One => 1.0,
        }
    }

    pub fn from_bit(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Gate::Zero),
            1 => Ok(Gate::One),
            other => Err(Error::Contract(format!("gate must be 0 or 1, got {other}"))),
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value() as u8)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Number of coupling blocks `K`.
    pub blocks: usize,
    /// Per-sample shape: `[d]` or `[C, H, W]`.
    pub input_shape: Vec<usize>,
    pub subnet: SubnetSpec,
    /// One network with an `s` head and a `t` head instead of two networks.
    pub shared: bool,
    /// Seed of the `K − 1` inter-block permutations.
    pub perm_seed: u64,
    pub init: Init,
    pub init_seed: u64,
}

impl FlowConfig {
    pub fn vector(dim: usize, blocks: usize, hidden: impl Into<Vec<usize>>) -> Self {
        Self {
            blocks,
            input_shape: vec![dim],
            subnet: SubnetSpec::dense(hidden),
            shared: false,
            perm_seed: 0,
            init: Init::Train,
            init_seed: 0,
        }
    }
}

/// Bookkeeping persisted with a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrainingMeta {
    pub epochs: u64,
    pub steps: u64,
    pub seed: u64,
}

/// A fixed feature permutation with its inverse. `forward[i]` is the input
/// feature that lands at output position `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    forward: Arc<[usize]>,
    inverse: Arc<[usize]>,
}

impl Permutation {
    fn from_units(units: &[usize], unit_len: usize) -> Self {
        let forward: Vec<usize> = units.iter().flat_map(|&u| (u * unit_len)..((u + 1) * unit_len)).collect();
        let mut inverse = vec![0; forward.len()];
        for (i, &src) in forward.iter().enumerate() {
            inverse[src] = i;
        }
        Self { forward: forward.into(), inverse: inverse.into() }
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// Applies `index` to every `n`-feature row of `data`.
    fn apply(index: &[usize], data: &[f64]) -> Vec<f64> {
        data.chunks_exact(index.len()).flat_map(|row| index.iter().map(move |&i| row[i])).collect()
    }
}

/// Draws the permutation between block `j` and `j + 1`. Permutations that
/// would feed the untouched `u₁` units straight back into `u₁` are redrawn,
/// so every unit gets transformed somewhere in a two-block stack.
fn draw_permutation(split: &SplitSpec, seed: u64, j: usize) -> Permutation {
    let (units, first) = (split.perm_units(), split.first_units());
    let mut rng = substream(seed, j as u64);
    let mut p: Vec<usize> = (0..units).collect();
    loop {
        p.shuffle(&mut rng);
        if p[..first].iter().any(|&u| u >= first) {
            return Permutation::from_units(&p, split.unit_len());
        }
    }
}

/// Result of pushing a batch through the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowOutput {
    /// Latent codes, `[B, …]`.
    pub z: Tensor<f64>,
    /// Per-sample `Σ_j c·Σ s(u₁ⱼ)`.
    pub logdet: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    config: FlowConfig,
    split: SplitSpec,
    blocks: Vec<CouplingBlock>,
    perms: Vec<Permutation>,
    params: Vec<Tensor>,
    pub meta: TrainingMeta,
}

impl FlowModel {
    pub fn new(config: FlowConfig) -> Result<Self> {
        if config.blocks == 0 {
            return Err(Error::Config("a flow needs at least one coupling block".into()));
        }
        let split = SplitSpec::for_shape(&config.input_shape)?;
        if config.subnet.kind == SubnetKind::Conv && !matches!(split, SplitSpec::Channels { .. }) {
            return Err(Error::Config("conv subnets need C×H×W input".into()));
        }
        if config.subnet.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        let heads = if config.shared { 2 } else { 1 };
        let (input, output) = match config.subnet.kind {
            SubnetKind::Dense => (split.first_len(), split.second_len()),
            SubnetKind::Conv => (1, split.perm_units() - 1),
        };
        let widths = |out: usize| {
            std::iter::once(input)
                .chain(config.subnet.hidden.iter().copied())
                .chain(std::iter::once(out))
                .collect::<Vec<_>>()
        };

        let mut rng = seeded(config.init_seed);
        let mut params = Vec::new();
        let mut blocks = Vec::with_capacity(config.blocks);
        for _ in 0..config.blocks {
            let mut make = |out: usize, params: &mut Vec<Tensor>| {
                let net = Subnet { kind: config.subnet.kind, widths: widths(out), first_param: params.len() };
                params.extend(net.init_params(config.init, &mut rng));
                net
            };
            let s = make(output * heads, &mut params);
            let t = (!config.shared).then(|| make(output, &mut params));
            blocks.push(CouplingBlock { split, s, t });
        }
        let perms = (0..config.blocks - 1).map(|j| draw_permutation(&split, config.perm_seed, j)).collect();
        Ok(Self { config, split, blocks, perms, params, meta: TrainingMeta::default() })
    }

    /// Rebuilds the architecture from `config` and installs `params`.
    pub fn with_params(config: FlowConfig, params: Vec<Tensor>) -> Result<Self> {
        let mut model = Self::new(FlowConfig { init: Init::Zero, ..config })?;
        model.set_params(params)?;
        Ok(model)
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn split(&self) -> &SplitSpec {
        &self.split
    }

    pub fn blocks(&self) -> &[CouplingBlock] {
        &self.blocks
    }

    pub fn permutations(&self) -> &[Permutation] {
        &self.perms
    }

    /// Latent dimension `l`.
    pub fn latent_dim(&self) -> usize {
        self.split.features()
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len() || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::Dimension("parameter list does not match the architecture".into()));
        }
        self.params = params;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    pub fn params_f64(&self) -> Vec<Tensor<f64>> {
        self.params.iter().map(Tensor::to_f64).collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.data().iter().map(|&v| v as f64)).collect()
    }

    /// Splits a flat vector back into parameter-shaped tensors.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Vec<Tensor<f64>>> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension(format!("{} values for {} parameters", flat.len(), self.param_count())));
        }
        let mut off = 0;
        self.params
            .iter()
            .map(|p| {
                let t = Tensor::new(p.shape().to_vec(), flat[off..off + p.numel()].to_vec());
                off += p.numel();
                t
            })
            .collect()
    }

    fn check_input(&self, x: &Tensor<f64>) -> Result<usize> {
        if x.shape().get(1..) != Some(self.config.input_shape.as_slice()) {
            return Err(Error::Dimension(format!(
                "model expects [B, {:?}], got {:?}",
                self.config.input_shape,
                x.shape()
            )));
        }
        Ok(x.shape()[0])
    }

    /// Records the full flow; returns `(z, log-det, log-likelihood)` nodes.
    fn record(&self, tape: &mut GradientTape, params: &[Var], x: Var, gate: Gate) -> Result<(Var, Option<Var>, Var)> {
        let shape = self.split.sample_shape();
        let mut h = x;
        let mut logdet: Option<Var> = None;
        for (j, block) in self.blocks.iter().enumerate() {
            let (v, ld) = block.record(tape, params, h, gate)?;
            if let Some(ld) = ld {
                logdet = Some(match logdet {
                    Some(acc) => tape.add(acc, ld)?,
                    None => ld,
                });
            }
            h = v;
            if let Some(p) = self.perms.get(j) {
                h = tape.gather(h, p.forward.clone(), &shape)?;
            }
        }
        let prior = tape.std_normal_log_density(h);
        let ll = match logdet {
            Some(ld) => tape.add(prior, ld)?,
            None => prior,
        };
        Ok((h, logdet, ll))
    }

    fn forward_with(&self, params: &[Tensor<f64>], x: &Tensor<f64>, gate: Gate) -> Result<(FlowOutput, Vec<f64>)> {
        let b = self.check_input(x)?;
        let mut tape = GradientTape::new();
        let vars = register(&mut tape, params);
        let xv = tape.input(x.clone());
        let (z, ld, ll) = self.record(&mut tape, &vars, xv, gate)?;
        let z = tape.value(z).clone();
        let logdet = ld.map_or_else(|| vec![0.0; b], |l| tape.value(l).data().to_vec());
        let ll = tape.value(ll).data().to_vec();
        if !z.is_finite() || ll.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow output".into()));
        }
        Ok((FlowOutput { z, logdet }, ll))
    }

    /// `z = f(x)` with the per-sample log-determinant.
    pub fn forward(&self, x: &Tensor<f64>, gate: Gate) -> Result<FlowOutput> {
        Ok(self.forward_with(&self.params_f64(), x, gate)?.0)
    }

    /// `x = f⁻¹(z)`.
    pub fn inverse(&self, z: &Tensor<f64>, gate: Gate) -> Result<Tensor<f64>> {
        self.check_input(z)?;
        let params = self.params_f64();
        let mut h = z.clone();
        for (j, block) in self.blocks.iter().enumerate().rev() {
            if let Some(p) = self.perms.get(j) {
                h = Tensor::new(h.shape().to_vec(), Permutation::apply(&p.inverse, h.data()))?;
            }
            h = block.inverse(&params, &h, gate)?;
        }
        if !h.is_finite() {
            return Err(Error::NonFinite("inverse flow output".into()));
        }
        Ok(h)
    }

    /// Per-sample `log p(x) = log N(f(x); 0, I) + log-det`, evaluated in
    /// fixed-size chunks.
    pub fn log_likelihood(&self, batch: &DataBatch, gate: Gate, exec: Exec) -> Result<Vec<f64>> {
        let params = self.params_f64();
        let n = batch.len();
        let chunks = exec.try_map(n.div_ceil(CHUNK), |c| {
            let x = batch.slice(c * CHUNK, ((c + 1) * CHUNK).min(n)).to_tensor();
            self.forward_with(&params, &x, gate).map(|(_, ll)| ll)
        })?;
        Ok(chunks.concat())
    }

    /// Mean negative log-likelihood with the gate open, under `params`.
    pub fn nll_with(&self, params: &[Tensor<f64>], batch: &DataBatch) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Contract("negative log-likelihood of an empty batch".into()));
        }
        let (_, ll) = self.forward_with(params, &batch.to_tensor(), Gate::One)?;
        Ok(-ll.iter().sum::<f64>() / ll.len() as f64)
    }

    pub fn nll(&self, batch: &DataBatch) -> Result<f64> {
        self.nll_with(&self.params_f64(), batch)
    }

    /// Mean negative log-likelihood (gate open) and its gradient.
    pub fn nll_and_grad(&self, batch: &DataBatch, exec: Exec) -> Result<(f64, Gradients)> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::Contract("negative log-likelihood of an empty batch".into()));
        }
        let params = self.params_f64();
        let parts = exec.try_map(n.div_ceil(CHUNK), |c| -> Result<(f64, Gradients)> {
            let x = batch.slice(c * CHUNK, ((c + 1) * CHUNK).min(n)).to_tensor();
            let mut tape = GradientTape::new();
            let vars = register(&mut tape, &params);
            let xv = tape.input(x);
            let (_, _, ll) = self.record(&mut tape, &vars, xv, Gate::One)?;
            let total = tape.sum_all(ll);
            let loss = tape.affine(total, -1.0 / n as f64, 0.0);
            let grads = tape.backward(loss)?;
            Ok((tape.value(loss).data()[0], grads))
        })?;
        let mut loss = 0.0;
        let mut grads = Gradients::default();
        for (l, g) in &parts {
            loss += l;
            grads.accumulate(g);
        }
        Ok((loss, grads))
    }
}

/// Standard-normal log-density `−(l/2) ln 2π − ‖z‖²/2` in 64-bit.
pub fn gaussian_log_density(z: &[f64]) -> f64 {
    crate::numerics::std_normal_log_density(z)
}
