use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::DataBatch;
use crate::{Error, Result};

/// Visible perturbation families. Severity runs from 1 (barely visible) to
/// 5 (gross).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptionKind {
    /// Additive `N(0, s²)` noise.
    GaussianNoise,
    /// Additive constant offset.
    Brightness,
    /// Scaling around mid-grey (0.5).
    Contrast,
}

const NOISE_STD: [f64; 5] = [0.04, 0.06, 0.08, 0.09, 0.10];
const BRIGHTNESS_SHIFT: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
const CONTRAST_FACTOR: [f64; 5] = [0.75, 0.6, 0.45, 0.3, 0.15];

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 3] =
        [CorruptionKind::GaussianNoise, CorruptionKind::Brightness, CorruptionKind::Contrast];

    /// The kind's parameter at `severity` (noise std, brightness shift, or
    /// contrast factor).
    pub fn parameter(self, severity: u8) -> Result<f64> {
        if !(1..=5).contains(&severity) {
            return Err(Error::Contract(format!("severity must be in 1..=5, got {severity}")));
        }
        let table = match self {
            CorruptionKind::GaussianNoise => &NOISE_STD,
            CorruptionKind::Brightness => &BRIGHTNESS_SHIFT,
            CorruptionKind::Contrast => &CONTRAST_FACTOR,
        };
        Ok(table[severity as usize - 1])
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::Brightness => "brightness",
            CorruptionKind::Contrast => "contrast",
        })
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_noise" => Ok(CorruptionKind::GaussianNoise),
            "brightness" => Ok(CorruptionKind::Brightness),
            "contrast" => Ok(CorruptionKind::Contrast),
            other => Err(Error::Contract(format!("unknown corruption kind {other:?}"))),
        }
    }
}

/// Applies `kind` at `severity` and clips the result to `[0, 1]`.
pub fn corrupt<R: Rng + ?Sized>(
    batch: &DataBatch,
    kind: CorruptionKind,
    severity: u8,
    rng: &mut R,
) -> Result<DataBatch> {
    let p = kind.parameter(severity)?;
    let data = batch
        .data()
        .iter()
        .map(|&v| {
            let v = v as f64;
            let out = match kind {
                CorruptionKind::GaussianNoise => {
                    let z: f64 = StandardNormal.sample(rng);
                    v + p * z
                }
                CorruptionKind::Brightness => v + p,
                CorruptionKind::Contrast => 0.5 + (v - 0.5) * p,
            };
            out.clamp(0.0, 1.0) as f32
        })
        .collect();
    DataBatch::new(batch.sample_shape().to_vec(), data)
}
