use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

/// RBF bandwidth: fixed, or resolved per test from the pooled sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    Median,
}

impl Bandwidth {
    pub fn resolve(self, pooled: &[Vec<f64>]) -> Result<f64> {
        match self {
            Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => Ok(s),
            Bandwidth::Fixed(s) => Err(Error::Contract(format!("bandwidth must be positive, got {s}"))),
            Bandwidth::Median => median_bandwidth(pooled),
        }
    }
}

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Fixed(s) => write!(f, "{s}"),
            Bandwidth::Median => f.write_str("median"),
        }
    }
}

impl FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "median" {
            return Ok(Bandwidth::Median);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Bandwidth::Fixed(v)),
            _ => Err(Error::Config(format!("bandwidth must be \"median\" or a positive number, got {s:?}"))),
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(−‖a − b‖² / σ²)`.
pub fn rbf_kernel(a: &[f64], b: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Contract(format!("RBF bandwidth must be positive, got {sigma}")));
    }
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("points of length {} and {}", a.len(), b.len())));
    }
    Ok((-sq_dist(a, b) / (sigma * sigma)).exp())
}

/// `σ = √median{‖pᵢ − pⱼ‖² : i < j}`; falls back to 1 when the median is 0.
pub fn median_bandwidth(points: &[Vec<f64>]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Contract(format!("median bandwidth needs at least 2 points, got {}", points.len())));
    }
    let mut d: Vec<f64> = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            d.push(sq_dist(a, b));
        }
    }
    d.sort_by(f64::total_cmp);
    let k = d.len();
    let med = if k % 2 == 1 { d[k / 2] } else { 0.5 * (d[k / 2 - 1] + d[k / 2]) };
    Ok(if med > 0.0 { med.sqrt() } else { 1.0 })
}

#[cfg(test)]
mod tests {
    use rand::Rng;

    use super::*;
    use crate::rng::seeded;

    #[test]
    fn rbf_values() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.3).unwrap(), 1.0);
        let v = rbf_kernel(&[0.0, 0.0], &[3.0, 4.0], 5.0).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
        let far: Vec<f64> = (1..6).map(|k| rbf_kernel(&[0.0], &[k as f64 * 3.0], 1.0).unwrap()).collect();
        assert!(far.windows(2).all(|w| w[1] < w[0]));
        assert!(far[4] < 1e-90);
    }

    #[test]
    fn rbf_is_symmetric_and_rejects_bad_sigma() {
        let (a, b) = ([0.2, -1.0, 3.0], [1.0, 0.5, -0.5]);
        assert_eq!(rbf_kernel(&a, &b, 2.0).unwrap(), rbf_kernel(&b, &a, 2.0).unwrap());
        assert!(matches!(rbf_kernel(&a, &b, 0.0), Err(Error::Contract(_))));
        assert!(rbf_kernel(&a, &b, -1.0).is_err());
    }

    #[test]
    fn median_single_pair_and_degenerate() {
        assert_eq!(median_bandwidth(&[vec![0.0, 0.0], vec![2.0, 0.0]]).unwrap(), 2.0);
        assert_eq!(median_bandwidth(&vec![vec![1.5; 3]; 6]).unwrap(), 1.0);
        assert!(median_bandwidth(&[vec![0.0]]).is_err());
    }

    #[test]
    fn median_matches_brute_force_over_45_pairs() {
        let mut rng = seeded(8);
        let pts: Vec<Vec<f64>> = (0..10).map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let mut all = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                if i < j {
                    let d: f64 = (0..3).map(|k| (pts[i][k] - pts[j][k]).powi(2)).sum();
                    all.push(d);
                }
            }
        }
        assert_eq!(all.len(), 45);
        // Rank-based oracle: the value with exactly 22 others below it.
        let oracle = all.iter().copied().find(|&v| all.iter().filter(|&&w| w < v).count() == 22).unwrap();
        assert_eq!(median_bandwidth(&pts).unwrap(), oracle.sqrt());
    }

    #[test]
    fn bandwidth_parsing() {
        assert_eq!("median".parse::<Bandwidth>().unwrap(), Bandwidth::Median);
        assert_eq!("0.5".parse::<Bandwidth>().unwrap(), Bandwidth::Fixed(0.5));
        assert!("-1".parse::<Bandwidth>().is_err());
    }
}
