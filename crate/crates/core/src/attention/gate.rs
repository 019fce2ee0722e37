use super::encoder::{Encoder, EncoderKind};
use super::kernel::Bandwidth;
use super::mmd::{permutation_test, AttentionVerdict};
use crate::data::DataBatch;
use crate::{Error, Exec, Result};

/// Gate settings. Defaults follow the reference setup: 32-dim encoding,
/// median bandwidth, 100 permutations at level 0.05, 250 reference samples
/// against test batches of 50.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionConfig {
    /// `None` picks `RandomConv` for images and `RandomProjection` otherwise.
    pub encoder: Option<EncoderKind>,
    pub encoder_seed: u64,
    pub dim: usize,
    pub bandwidth: Bandwidth,
    pub permutations: usize,
    pub alpha: f64,
    pub seed: u64,
    pub reference_size: usize,
    pub test_batch: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            encoder: None,
            encoder_seed: 0,
            dim: 32,
            bandwidth: Bandwidth::Median,
            permutations: 100,
            alpha: 0.05,
            seed: 0,
            reference_size: 250,
            test_batch: 50,
        }
    }
}

/// A reference set, already encoded, ready to test batches against.
#[derive(Debug, Clone)]
pub struct AttentionGate {
    config: AttentionConfig,
    encoder: Encoder,
    reference: Vec<Vec<f64>>,
}

impl AttentionGate {
    pub fn new(reference: &DataBatch, config: AttentionConfig, exec: Exec) -> Result<Self> {
        if reference.len() < 2 {
            return Err(Error::Contract(format!("reference set needs at least 2 samples, got {}", reference.len())));
        }
        let kind = config.encoder.unwrap_or(if reference.is_image() {
            EncoderKind::RandomConv
        } else {
            EncoderKind::RandomProjection
        });
        let encoder = Encoder::new(kind, reference.sample_shape(), config.dim, config.encoder_seed)?;
        let reference = encoder.encode_with(reference, exec)?;
        Ok(Self { config, encoder, reference })
    }

    pub fn config(&self) -> &AttentionConfig {
        &self.config
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    /// One verdict for the whole of `test`.
    pub fn verdict(&self, test: &DataBatch, exec: Exec) -> Result<AttentionVerdict> {
        if test.len() < 2 {
            return Err(Error::Contract(format!("test batch needs at least 2 samples, got {}", test.len())));
        }
        let y = self.encoder.encode_with(test, exec)?;
        let pooled: Vec<Vec<f64>> = self.reference.iter().chain(&y).cloned().collect();
        let sigma = self.config.bandwidth.resolve(&pooled)?;
        permutation_test(
            &self.reference,
            &y,
            sigma,
            self.config.permutations,
            self.config.alpha,
            self.config.seed,
            exec,
        )
    }
}

/// Encodes both batches and runs the permutation test in one call.
pub fn attention_gate(
    reference: &DataBatch,
    test: &DataBatch,
    config: &AttentionConfig,
    exec: Exec,
) -> Result<AttentionVerdict> {
    AttentionGate::new(reference, config.clone(), exec)?.verdict(test, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_constant, gen_gaussian_mixture, gen_noise};
    use crate::flow::Gate;
    use crate::rng::seeded;

    #[test]
    fn self_test_keeps_gate_open() {
        let mut rng = seeded(5);
        let reference = gen_gaussian_mixture(250, &[vec![0.2, 0.4]], 0.05, &mut rng).unwrap();
        let test = reference.slice(0, 50);
        let v = attention_gate(&reference, &test, &AttentionConfig::default(), Exec::Parallel).unwrap();
        assert_eq!(v.gate, Gate::One, "{v:?}");
        assert!(v.p_value >= 0.05);
    }

    #[test]
    fn noise_against_constant_images_closes_gate() {
        let mut rng = seeded(6);
        let reference = gen_constant(60, &[3, 16, 16], &mut rng).unwrap();
        let test = gen_noise(20, &[3, 16, 16], &mut rng).unwrap();
        let cfg = AttentionConfig { reference_size: 60, test_batch: 20, ..Default::default() };
        let v = attention_gate(&reference, &test, &cfg, Exec::Parallel).unwrap();
        assert_eq!(v.gate, Gate::Zero, "{v:?}");
    }

    #[test]
    fn tiny_batches_are_rejected() {
        let reference = DataBatch::from_rows(&[vec![0.0], vec![1.0], vec![0.5]]).unwrap();
        let gate = AttentionGate::new(&reference, AttentionConfig::default(), Exec::Sequential).unwrap();
        let empty = DataBatch::new(vec![1], vec![]).unwrap();
        assert!(matches!(gate.verdict(&empty, Exec::Sequential), Err(Error::Contract(_))));
        assert!(gate.verdict(&reference.slice(0, 1), Exec::Sequential).is_err());
    }
}
