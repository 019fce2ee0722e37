use rand::seq::index;

use super::FlowModel;
use crate::data::DataBatch;
use crate::numerics::{AdamConfig, AdamState};
use crate::rng::seeded;
use crate::{Error, Exec, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub exec: Exec,
}

impl TrainConfig {
    /// 200 epochs × 100 steps × batch 250.
    pub fn full_scale() -> Self {
        Self { epochs: 200, steps_per_epoch: 100, batch_size: 250, ..Self::desk() }
    }

    /// 50 epochs × 50 steps × batch 128.
    pub fn desk() -> Self {
        Self {
            epochs: 50,
            steps_per_epoch: 50,
            batch_size: 128,
            seed: 0,
            adam: AdamConfig::default(),
            exec: Exec::default(),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mini-batch loss before each update.
    pub losses: Vec<f64>,
}

/// Maximum-likelihood training with the gate held open. Mini-batches are
/// drawn without replacement from `data` with a generator seeded by
/// `config.seed`, so the loss curve is a pure function of the inputs.
pub fn train(model: &mut FlowModel, data: &DataBatch, config: &TrainConfig) -> Result<TrainReport> {
    let total = config.epochs * config.steps_per_epoch;
    if total == 0 {
        return Ok(TrainReport::default());
    }
    if data.is_empty() || config.batch_size == 0 {
        return Err(Error::Contract("training needs data and a positive batch size".into()));
    }
    if data.sample_shape() != model.config().input_shape.as_slice() {
        return Err(Error::Dimension(format!(
            "model expects samples of shape {:?}, data has {:?}",
            model.config().input_shape,
            data.sample_shape()
        )));
    }
    let mut rng = seeded(config.seed);
    let mut adam = AdamState::new(config.adam, model.params());
    let batch_size = config.batch_size.min(data.len());
    let mut losses = Vec::with_capacity(total);

    for step in 0..total {
        let idx = index::sample(&mut rng, data.len(), batch_size).into_vec();
        let batch = data.select(&idx);
        let result = model.nll_and_grad(&batch, config.exec);
        let diverged = |loss: f64| Error::Diverged {
            step,
            loss,
            param_norm: model.flat_params().iter().map(|v| v * v).sum::<f64>().sqrt(),
        };
        let (loss, grads) = match result {
            Ok(ok) => ok,
            Err(Error::NonFinite(_)) => return Err(diverged(f64::NAN)),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || !grads.norm().is_finite() {
            return Err(diverged(loss));
        }
        losses.push(loss);
        adam.step(model.params_mut(), &grads);
    }
    model.meta.epochs += config.epochs as u64;
    model.meta.steps += total as u64;
    model.meta.seed = config.seed;
    Ok(TrainReport { losses })
}
