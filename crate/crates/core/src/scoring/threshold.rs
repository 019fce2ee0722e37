use std::f64::consts::PI;
use std::fmt;

use super::erf::confidence_width;
use crate::flow::Gate;
use crate::{Error, Result};

/// `L_th = −(l/2)·ln 2π − l·ln(w σ)` with `w = confidence_width(α)`.
pub fn likelihood_threshold(alpha: f64, latent_dim: usize, sigma: f64) -> Result<f64> {
    ThresholdSpec::new(alpha, latent_dim, sigma).map(|s| s.threshold())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSpec {
    pub alpha: f64,
    pub latent_dim: usize,
    pub sigma: f64,
    width: f64,
}

impl ThresholdSpec {
    pub fn new(alpha: f64, latent_dim: usize, sigma: f64) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::Domain("latent dimension must be at least 1".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        let width = confidence_width(alpha)?;
        Ok(Self { alpha, latent_dim, sigma, width })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn threshold(&self) -> f64 {
        let l = self.latent_dim as f64;
        -0.5 * l * (2.0 * PI).ln() - l * (self.width * self.sigma).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    In,
    Out,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::In => "in",
            Label::Out => "out",
        })
    }
}

/// `Out` iff `loglik < threshold`; equality counts as in-distribution.
/// NaN log-likelihoods are labelled `Out`.
pub fn classify(logliks: &[f64], threshold: f64) -> Vec<Label> {
    logliks.iter().map(|&l| if l >= threshold { Label::In } else { Label::Out }).collect()
}

/// Per-sample outcome of scoring one test batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodReport {
    pub logliks: Vec<f64>,
    pub gate: Gate,
    pub threshold: f64,
    pub labels: Vec<Label>,
}

impl LikelihoodReport {
    pub fn new(logliks: Vec<f64>, gate: Gate, threshold: f64) -> Self {
        let labels = classify(&logliks, threshold);
        Self { logliks, gate, threshold, labels }
    }

    pub fn out_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == Label::Out).count()
    }
}
