use std::f64::consts::PI;

use crate::{Error, Result};

const SERIES_LIMIT: f64 = 3.0;

/// `erf(x) = 2/√π · e^{−x²} · Σ 2ⁿ x^{2n+1} / (1·3·…·(2n+1))`. Every term
/// is positive, so there is no cancellation for `|x| ≤ 3`.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..400 {
        term *= 2.0 * x2 / (2 * n + 1) as f64;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    2.0 / PI.sqrt() * (-x2).exp() * sum
}

/// Continued fraction for `erfc(x)`, `x > 0`, evaluated with the modified
/// Lentz algorithm.
fn erfc_continued_fraction(x: f64) -> f64 {
    // erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.abs() <= SERIES_LIMIT {
        erf_series(x)
    } else {
        x.signum() * (1.0 - erfc_continued_fraction(x.abs()))
    }
}

pub fn erfc(x: f64) -> f64 {
    if x > SERIES_LIMIT {
        erfc_continued_fraction(x)
    } else {
        1.0 - erf(x)
    }
}

/// Single-precision starting point (Giles, 2010).
fn inverse_erf_initial(p: f64) -> f64 {
    let mut w = -((1.0 - p) * (1.0 + p)).ln();
    let poly = if w < 5.0 {
        w -= 2.5;
        [
            2.810_226_36e-08,
            3.432_739_39e-07,
            -3.523_387_7e-06,
            -4.391_506_54e-06,
            2.185_808_7e-04,
            -1.253_725_03e-03,
            -4.177_681_64e-03,
            2.466_407_27e-01,
            1.501_409_41,
        ]
    } else {
        w = w.sqrt() - 3.0;
        [
            -2.002_142_57e-04,
            1.009_505_58e-04,
            1.349_343_22e-03,
            -3.673_428_44e-03,
            5.739_507_73e-03,
            -7.622_461_3e-03,
            9.438_870_47e-03,
            1.001_674_06,
            2.832_976_82,
        ]
    };
    poly.iter().fold(0.0, |acc, &c| acc * w + c) * p
}

/// `y` with `erf(y) = p`, for `|p| < 1`.
pub fn inverse_erf(p: f64) -> Result<f64> {
    if !(p.abs() < 1.0) {
        return Err(Error::Domain(format!("inverse erf needs |p| < 1, got {p}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let (sign, q) = (p.signum(), p.abs());
    let mut y = inverse_erf_initial(q);
    for _ in 0..4 {
        // Residual via erfc keeps precision when q is close to 1.
        let resid = (1.0 - q) - erfc(y);
        let slope = 2.0 / PI.sqrt() * (-y * y).exp();
        y -= resid / slope;
    }
    Ok(sign * y)
}

/// `w = √2 · erf⁻¹(1 − α)`.
pub fn confidence_width(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(std::f64::consts::SQRT_2 * inverse_erf(1.0 - alpha)?)
}
