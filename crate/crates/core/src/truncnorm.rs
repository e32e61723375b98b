//! Normal distribution truncated to an interval: sampling and the first two
//! moments, both stable far into the tails.
//!
//! Used for the AR(1) coefficient, whose conditional and variational factors
//! live on `(-1, 1)`.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// Width below which a standardized interval is treated as locally uniform.
const NARROW: f64 = 1e-4;

/// Upper bounds below this use exponential rejection instead of inversion.
const FAR_TAIL: f64 = -30.0;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `ln Φ(x)`, accurate far into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        // Mills ratio asymptotics
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * PI).ln()
}

fn check(sd: f64, lo: f64, hi: f64) -> Result<()> {
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Domain(format!("truncated normal needs sd > 0, got {sd}")));
    }
    if !(lo < hi) {
        return Err(Error::Domain(format!("empty truncation interval ({lo}, {hi})")));
    }
    Ok(())
}

/// Mean and variance of `N(mean, sd²)` restricted to `(lo, hi)`.
pub fn truncated_normal_moments(mean: f64, sd: f64, lo: f64, hi: f64) -> Result<(f64, f64)> {
    check(sd, lo, hi)?;
    let (m, v) = standard_moments((lo - mean) / sd, (hi - mean) / sd);
    let out_mean = (mean + sd * m).clamp(lo, hi);
    Ok((out_mean, (sd * sd * v).max(0.0)))
}

fn standard_moments(a: f64, b: f64) -> (f64, f64) {
    if a >= 0.0 {
        let (m, v) = standard_moments(-b, -a);
        return (-m, v);
    }
    if b - a < NARROW {
        let c = 0.5 * (a + b);
        let h2 = 0.25 * (b - a) * (b - a);
        return (c - c * h2 / 3.0, h2 / 3.0);
    }
    let log_z = if b > 0.0 {
        (norm_cdf(b) - norm_cdf(a)).ln()
    } else {
        let lb = log_norm_cdf(b);
        let la = log_norm_cdf(a);
        lb + (-(la - lb).exp()).ln_1p()
    };
    let ratio = |x: f64| {
        if x.is_finite() {
            (log_norm_pdf(x) - log_z).exp()
        } else {
            0.0
        }
    };
    let ra = ratio(a);
    let rb = ratio(b);
    let xa = if a.is_finite() { a * ra } else { 0.0 };
    let xb = if b.is_finite() { b * rb } else { 0.0 };
    let m = ra - rb;
    let v = 1.0 + xa - xb - m * m;
    (m.clamp(a, b), v.max(0.0))
}

/// One draw of `N(mean, sd²)` restricted to `(lo, hi)`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mean: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<f64> {
    check(sd, lo, hi)?;
    let z = standard_draw((lo - mean) / sd, (hi - mean) / sd, rng);
    Ok((mean + sd * z).clamp(lo, hi))
}

fn standard_draw<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a >= 0.0 {
        return -standard_draw(-b, -a, rng);
    }
    if b > 0.0 {
        if b - a >= 1.0 {
            loop {
                let z: f64 = rng.sample(StandardNormal);
                if z > a && z < b {
                    return z;
                }
            }
        }
        // narrow interval around 0: uniform proposal
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>() <= (-0.5 * z * z).exp() {
                return z;
            }
        }
    }
    if b < FAR_TAIL {
        // shifted exponential proposal below the upper bound
        let rate = -b;
        loop {
            let s: f64 = rng.sample::<f64, _>(Exp1) / rate;
            let z = b - s;
            if z > a && rng.random::<f64>() <= (-0.5 * s * s).exp() {
                return z;
            }
        }
    }
    let la = log_norm_cdf(a);
    let lb = log_norm_cdf(b);
    let r = (la - lb).exp();
    let u: f64 = rng.random();
    let lp = lb + (r + u * (1.0 - r)).ln();
    let z = -SQRT_2 * erfc_inv(2.0 * lp.exp());
    z.clamp(a, b)
}
