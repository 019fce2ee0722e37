use rand::seq::index;

use super::kernel::sq_dist;
use crate::flow::Gate;
use crate::rng::substream;
use crate::{Error, Exec, Result};

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n < 2 || m < 2 {
        return Err(Error::Contract(format!("unbiased MMD² needs at least 2 samples per side, got n = {n}, m = {m}")));
    }
    Ok(())
}

/// Unbiased MMD² with an RBF kernel of bandwidth `sigma`:
///
/// `1/(n(n−1)) Σ_{i≠j} k(xᵢ,xⱼ) + 1/(m(m−1)) Σ_{i≠j} k(yᵢ,yⱼ) − 2/(nm) Σ_{i,j} k(xᵢ,yⱼ)`.
///
/// Can be negative.
pub fn mmd_u2(x: &[Vec<f64>], y: &[Vec<f64>], sigma: f64) -> Result<f64> {
    check_sizes(x.len(), y.len())?;
    if !(sigma > 0.0) {
        return Err(Error::Contract(format!("RBF bandwidth must be positive, got {sigma}")));
    }
    let inv = 1.0 / (sigma * sigma);
    let k = |a: &[f64], b: &[f64]| (-sq_dist(a, b) * inv).exp();
    let within = |s: &[Vec<f64>]| {
        let mut acc = 0.0;
        for (i, a) in s.iter().enumerate() {
            for b in &s[i + 1..] {
                acc += k(a, b);
            }
        }
        2.0 * acc
    };
    let (n, m) = (x.len() as f64, y.len() as f64);
    let cross: f64 = x.iter().map(|a| y.iter().map(|b| k(a, b)).sum::<f64>()).sum();
    Ok(within(x) / (n * (n - 1.0)) + within(y) / (m * (m - 1.0)) - 2.0 * cross / (n * m))
}

/// Kernel matrix over `x ∪ y`, reused across permutations.
#[derive(Debug, Clone)]
pub struct PooledGram {
    n: usize,
    m: usize,
    /// Row-major `N×N`, `N = n + m`.
    k: Vec<f64>,
}

impl PooledGram {
    pub fn new(x: &[Vec<f64>], y: &[Vec<f64>], sigma: f64, exec: Exec) -> Result<Self> {
        check_sizes(x.len(), y.len())?;
        if !(sigma > 0.0) {
            return Err(Error::Contract(format!("RBF bandwidth must be positive, got {sigma}")));
        }
        let pooled: Vec<&Vec<f64>> = x.iter().chain(y).collect();
        let inv = 1.0 / (sigma * sigma);
        let big = pooled.len();
        let rows = exec.map(big, |i| pooled.iter().map(|b| (-sq_dist(pooled[i], b) * inv).exp()).collect::<Vec<f64>>());
        Ok(Self { n: x.len(), m: y.len(), k: rows.concat() })
    }

    /// MMD² for the split where `in_x[i]` says whether pooled point `i` is
    /// on the `x` side. Sums run in pooled index order, so equal labelings
    /// give bit-equal statistics.
    pub fn statistic(&self, in_x: &[bool]) -> f64 {
        let big = self.n + self.m;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for i in 0..big {
            let row = &self.k[i * big..(i + 1) * big];
            for j in i + 1..big {
                match (in_x[i], in_x[j]) {
                    (true, true) => sxx += row[j],
                    (false, false) => syy += row[j],
                    _ => sxy += row[j],
                }
            }
        }
        let (n, m) = (self.n as f64, self.m as f64);
        2.0 * sxx / (n * (n - 1.0)) + 2.0 * syy / (m * (m - 1.0)) - 2.0 * sxy / (n * m)
    }

    pub fn observed(&self) -> f64 {
        let labels: Vec<bool> = (0..self.n + self.m).map(|i| i < self.n).collect();
        self.statistic(&labels)
    }
}

/// Outcome of the two-sample permutation test.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionVerdict {
    pub mmd_observed: f64,
    /// Fraction of permuted statistics strictly above the observed one.
    pub p_value: f64,
    pub alpha: f64,
    /// `Zero` exactly when `p_value < alpha`.
    pub gate: Gate,
    pub permutations: usize,
    pub bandwidth: f64,
}

/// Pools `x ∪ y`, draws `permutations` uniform repartitions into sizes
/// `(n, m)` and compares their MMD² with the observed one. Permutation `p`
/// draws from its own stream of `seed`, so the verdict does not depend on
/// how the permutations are scheduled.
pub fn permutation_test(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    sigma: f64,
    permutations: usize,
    alpha: f64,
    seed: u64,
    exec: Exec,
) -> Result<AttentionVerdict> {
    if permutations == 0 {
        return Err(Error::Contract("permutation test needs at least one permutation".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Contract(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let gram = PooledGram::new(x, y, sigma, exec)?;
    let observed = gram.observed();
    let (n, big) = (x.len(), x.len() + y.len());
    let exceed = exec.map(permutations, |p| {
        let mut rng = substream(seed, p as u64);
        let mut in_x = vec![false; big];
        for i in index::sample(&mut rng, big, n) {
            in_x[i] = true;
        }
        gram.statistic(&in_x) > observed
    });
    let p_value = exceed.iter().filter(|&&e| e).count() as f64 / permutations as f64;
    Ok(AttentionVerdict {
        mmd_observed: observed,
        p_value,
        alpha,
        gate: if p_value < alpha { Gate::Zero } else { Gate::One },
        permutations,
        bandwidth: sigma,
    })
}
