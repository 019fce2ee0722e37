use super::{Gradients, ParamId, Tensor};

/// Adam hyperparameters. Defaults are the flow's training setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Exponential learning-rate decay per step: `lr_t = lr · exp(−decay · t)`.
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.8, beta2: 0.99, eps: 1e-8, decay: 2e-5 }
    }
}

/// Moment estimates for a list of parameter arrays. Moments are kept in
/// 64-bit; parameters stay in 32-bit storage.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        Self { config, m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Learning rate used by the most recent step.
    pub fn current_lr(&self) -> f64 {
        self.config.lr * (-self.config.decay * self.t as f64).exp()
    }

    /// One bias-corrected Adam update. Parameter `i` reads its gradient from
    /// `ParamId(i)`; parameters without a gradient are treated as having a
    /// zero gradient.
    pub fn step(&mut self, params: &mut [Tensor], grads: &Gradients) {
        assert_eq!(params.len(), self.m.len(), "parameter list changed shape");
        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let lr = self.current_lr();
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let g = grads.get(ParamId(i));
            if let Some(g) = g {
                assert_eq!(g.len(), p.numel(), "gradient shape mismatch for parameter {i}");
            }
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g.map_or(0.0, |g| g[j]);
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let update = lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + c.eps);
                if update != 0.0 {
                    *w = (*w as f64 - update) as f32;
                }
            }
        }
    }
}
