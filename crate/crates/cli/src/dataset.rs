//! One-line dataset descriptions, e.g.
//!
//! ```text
//! gaussian_mixture n=5000 centers=0.05,0.15|0.15,0.05 std=0.01 seed=3
//! noise n=100 shape=3x32x32
//! file path=data/mnist-test.idx rgb=true corrupt=contrast severity=2
//! data/held-out.csv
//! ```
//!
//! A value whose first word is not a known kind is read as a file path.
//! Generator seeds default to the run seed.

use std::path::{Path, PathBuf};

use inflow_core::data::{
    corrupt, gen_constant, gen_gaussian_mixture, gen_noise, gen_uniform_box, gray_to_rgb, load_dataset, CorruptionKind,
    DataBatch,
};
use inflow_core::rng::{seeded, substream};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(PathBuf),
    Noise { n: usize, shape: Vec<usize> },
    Constant { n: usize, shape: Vec<usize> },
    GaussianMixture { n: usize, centers: Vec<Vec<f64>>, std: f64 },
    UniformBox { n: usize, dim: usize, low: f64, high: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub source: Source,
    pub seed: Option<u64>,
    pub rgb: bool,
    pub corruption: Option<(CorruptionKind, u8)>,
}

fn parse_shape(s: &str) -> Result<Vec<usize>, String> {
    let dims: Vec<usize> =
        s.split('x').map(|d| d.parse::<usize>().map_err(|_| format!("bad shape {s:?}"))).collect::<Result<_, _>>()?;
    if dims.len() != 3 || dims.contains(&0) {
        return Err(format!("image shape must be CxHxW with positive sizes, got {s:?}"));
    }
    Ok(dims)
}

fn parse_centers(s: &str) -> Result<Vec<Vec<f64>>, String> {
    let centers: Vec<Vec<f64>> = s
        .split('|')
        .map(|c| c.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad center {c:?}"))).collect())
        .collect::<Result<_, _>>()?;
    if centers.iter().any(|c| c.len() != centers[0].len()) {
        return Err("all centers need the same dimension".into());
    }
    Ok(centers)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("bad value for {key}: {v:?}"))
}

impl DatasetSpec {
    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let mut words = text.split_whitespace();
        let kind = words.next().ok_or("empty dataset description")?;
        const KINDS: [&str; 5] = ["file", "noise", "constant", "gaussian_mixture", "uniform_box"];
        if !KINDS.contains(&kind) {
            if words.next().is_some() {
                return Err(format!("unknown dataset kind {kind:?}"));
            }
            return Ok(Self { source: Source::File(base.join(kind)), seed: None, rgb: false, corruption: None });
        }

        let mut n = None;
        let mut shape = None;
        let mut centers = None;
        let mut std = None;
        let mut dim = None;
        let (mut low, mut high) = (None, None);
        let mut path = None;
        let mut seed = None;
        let mut rgb = false;
        let (mut ckind, mut severity) = (None, None);
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| format!("expected key=value, got {w:?}"))?;
            match k {
                "n" => n = Some(num::<usize>(k, v)?),
                "shape" => shape = Some(parse_shape(v)?),
                "centers" => centers = Some(parse_centers(v)?),
                "std" => std = Some(num::<f64>(k, v)?),
                "dim" => dim = Some(num::<usize>(k, v)?),
                "low" => low = Some(num::<f64>(k, v)?),
                "high" => high = Some(num::<f64>(k, v)?),
                "path" => path = Some(base.join(v)),
                "seed" => seed = Some(num::<u64>(k, v)?),
                "rgb" => rgb = num::<bool>(k, v)?,
                "corrupt" => ckind = Some(v.parse::<CorruptionKind>().map_err(|e| e.to_string())?),
                "severity" => severity = Some(num::<u8>(k, v)?),
                _ => return Err(format!("unknown dataset parameter {k:?}")),
            }
        }
        let need_n = || match n {
            Some(n) if n > 0 => Ok(n),
            _ => Err(format!("{kind} needs n >= 1")),
        };
        let source = match kind {
            "file" => Source::File(path.ok_or("file needs path=")?),
            "noise" | "constant" => {
                let shape = shape.unwrap_or_else(|| vec![3, 32, 32]);
                if shape[0] != 3 {
                    return Err(format!("{kind} images need 3 channels"));
                }
                if kind == "noise" {
                    Source::Noise { n: need_n()?, shape }
                } else {
                    Source::Constant { n: need_n()?, shape }
                }
            }
            "gaussian_mixture" => {
                let std = std.ok_or("gaussian_mixture needs std=")?;
                if !(std > 0.0) {
                    return Err("std must be positive".into());
                }
                Source::GaussianMixture {
                    n: need_n()?,
                    centers: centers.ok_or("gaussian_mixture needs centers=")?,
                    std,
                }
            }
            _ => {
                let (low, high) = (low.unwrap_or(0.0), high.unwrap_or(1.0));
                if !(low < high) {
                    return Err("uniform_box needs low < high".into());
                }
                Source::UniformBox { n: need_n()?, dim: dim.ok_or("uniform_box needs dim=")?, low, high }
            }
        };
        let corruption = match (ckind, severity) {
            (None, None) => None,
            (Some(k), s) => {
                let s = s.unwrap_or(1);
                if !(1..=5).contains(&s) {
                    return Err(format!("severity must be 1..=5, got {s}"));
                }
                Some((k, s))
            }
            (None, Some(_)) => return Err("severity given without corrupt=".into()),
        };
        Ok(Self { source, seed, rgb, corruption })
    }

    /// Loads or generates the batch. Generation draws from `seed`;
    /// corruption from an independent stream of the same seed.
    pub fn materialize(&self, run_seed: u64) -> CliResult<DataBatch> {
        let seed = self.seed.unwrap_or(run_seed);
        let mut rng = seeded(seed);
        let mut batch = match &self.source {
            Source::File(p) => load_dataset(p).map_err(CliError::input)?,
            Source::Noise { n, shape } => gen_noise(*n, shape, &mut rng)?,
            Source::Constant { n, shape } => gen_constant(*n, shape, &mut rng)?,
            Source::GaussianMixture { n, centers, std } => gen_gaussian_mixture(*n, centers, *std, &mut rng)?,
            Source::UniformBox { n, dim, low, high } => gen_uniform_box(*n, *dim, *low, *high, &mut rng)?,
        };
        if self.rgb {
            batch = gray_to_rgb(&batch).map_err(CliError::input)?;
        }
        if let Some((kind, severity)) = self.corruption {
            batch = corrupt(&batch, kind, severity, &mut substream(seed, 1)).map_err(CliError::input)?;
        }
        if batch.is_empty() {
            return Err(CliError::Usage("dataset is empty".into()));
        }
        Ok(batch)
    }
}
