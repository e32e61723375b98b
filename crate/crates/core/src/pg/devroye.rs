//! Exact PG(1, c) sampler: alternating-series rejection on the Jacobi
//! J*(1, z) distribution with `z = |c| / 2`, then `PG(1, c) = J*(1, z) / 4`.
//!
//! The proposal mixes a truncated inverse Gaussian on `(0, t]` with an
//! exponential on `(t, ∞)`; `t = 0.64` is the split point.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::truncnorm::log_norm_cdf;

const TRUNC: f64 = 0.64;

pub(super) fn sample_unit<R: Rng + ?Sized>(c: f64, rng: &mut R) -> f64 {
    0.25 * sample_jacobi(0.5 * c.abs(), rng)
}

fn sample_jacobi<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let rate = 0.125 * PI * PI + 0.5 * z * z;
    let p_exp = mass_exponential(z, rate);
    loop {
        let x = if rng.random::<f64>() < p_exp {
            let e: f64 = rng.sample(Exp1);
            TRUNC + e / rate
        } else {
            truncated_inverse_gaussian(z, rng)
        };
        let mut s = coefficient(0, x);
        let y = rng.random::<f64>() * s;
        let mut n = 0;
        loop {
            n += 1;
            if n % 2 == 1 {
                s -= coefficient(n, x);
                if y <= s {
                    return x;
                }
            } else {
                s += coefficient(n, x);
                if y > s {
                    break;
                }
            }
        }
    }
}

/// Probability of the exponential piece of the proposal.
fn mass_exponential(z: f64, rate: f64) -> f64 {
    let root = (1.0 / TRUNC).sqrt();
    let b = root * (TRUNC * z - 1.0);
    let a = -root * (TRUNC * z + 1.0);
    let x0 = rate.ln() + rate * TRUNC;
    let xb = x0 - z + log_norm_cdf(b);
    let xa = x0 + z + log_norm_cdf(a);
    let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
    1.0 / (1.0 + q_over_p)
}

/// n-th term of the piecewise series representation of the J*(1, z) density
/// kernel.
fn coefficient(n: u32, x: f64) -> f64 {
    let h = n as f64 + 0.5;
    let k = h * PI;
    if x > TRUNC {
        k * (-0.5 * k * k * x).exp()
    } else if x > 0.0 {
        (-1.5 * (0.5 * PI * x).ln() + k.ln() - 2.0 * h * h / x).exp()
    } else {
        0.0
    }
}

/// Inverse Gaussian IG(1/z, 1) restricted to `(0, TRUNC]`.
fn truncated_inverse_gaussian<R: Rng + ?Sized>(z: f64, rng: &mut R) -> f64 {
    let mu = if z > 0.0 { 1.0 / z } else { f64::INFINITY };
    if mu > TRUNC {
        loop {
            let mut e1: f64 = rng.sample(Exp1);
            let mut e2: f64 = rng.sample(Exp1);
            while e1 * e1 > 2.0 * e2 / TRUNC {
                e1 = rng.sample(Exp1);
                e2 = rng.sample(Exp1);
            }
            let d = 1.0 + TRUNC * e1;
            let x = TRUNC / (d * d);
            let accept = (-0.5 * z * z * x).exp();
            if rng.random::<f64>() <= accept {
                return x;
            }
        }
    } else {
        loop {
            let n: f64 = rng.sample(StandardNormal);
            let y = n * n;
            let my = mu * y;
            let mut x = mu + 0.5 * mu * my - 0.5 * mu * (4.0 * my + my * my).sqrt();
            if rng.random::<f64>() > mu / (mu + x) {
                x = mu * mu / x;
            }
            if x <= TRUNC {
                return x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_mass_is_a_probability() {
        for &z in &[0.0, 0.1, 1.0, 5.0, 40.0, 200.0] {
            let rate = 0.125 * PI * PI + 0.5 * z * z;
            let p = mass_exponential(z, rate);
            assert!((0.0..1.0).contains(&p), "z={z} p={p}");
            if z <= 5.0 {
                assert!(p > 0.0);
            }
        }
    }

    #[test]
    fn small_x_coefficient_uses_the_left_expansion() {
        // a_0(x) for x ≤ t is π/2 · (2/(πx))^{3/2} · exp(-1/(2x))
        let x = 0.3;
        let direct = 0.5 * PI * (2.0 / (PI * x)).powf(1.5) * (-0.5 / x).exp();
        assert!((coefficient(0, x) - direct).abs() < 1e-12);
        let x = 1.0;
        assert!((coefficient(1, x) - 1.5 * PI * (-0.5 * 2.25 * PI * PI).exp()).abs() < 1e-15);
    }
}
