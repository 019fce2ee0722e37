pub const DEFAULT_FD_EPS: f64 = 1e-4;

/// Central-difference gradient of `f` at `params`.
///
/// Each coordinate costs two evaluations of `f`; this is a verification
/// oracle, not something to train with.
pub fn finite_diff_grad<F>(f: F, params: &[f64], eps: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + eps;
            let hi = f(&p);
            p[i] = orig - eps;
            let lo = f(&p);
            p[i] = orig;
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}
