//! Pólya-Gamma variates and their closed-form mean.
//!
//! A PG(b, c) variate is `(1 / 2π²) Σ_k g_k / ((k - 1/2)² + c² / 4π²)` with
//! `g_k ~ Gamma(b, 1)`. Shapes seen by the weighted samplers are rescaled
//! survey weights, so non-integer `b` is the common case.
//!
//! Sampling strategy:
//! * unit shape: Devroye-style exact alternating-series rejection
//!   ([`devroye`]),
//! * integer part of any shape: a sum of exact unit draws,
//! * fractional part: the first [`FRACTIONAL_EXACT_TERMS`] series terms drawn
//!   exactly plus a moment-matched gamma for the remaining tail,
//! * shapes above [`NORMAL_APPROX_SHAPE`]: moment-matched normal clamped at 0.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::scalar::Real;

mod devroye;

/// Series terms drawn exactly for the fractional part of a shape.
pub const FRACTIONAL_EXACT_TERMS: usize = 20;

/// Default truncation of the series oracle.
pub const ORACLE_TRUNCATION: usize = 200;

/// Shapes above this use the normal approximation.
pub const NORMAL_APPROX_SHAPE: f64 = 1000.0;

const TWO_PI_SQ: f64 = 2.0 * PI * PI;

/// Parameters of a PG(b, c) distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgParams<T> {
    b: T,
    c: T,
}

impl<T: Real> PgParams<T> {
    pub fn new(b: T, c: T) -> Result<Self> {
        check_shape(b.as_f64())?;
        if !c.is_finite_real() {
            return Err(Error::Domain(format!("PG tilt must be finite, got {c}")));
        }
        Ok(Self { b, c })
    }

    pub fn shape(&self) -> T {
        self.b
    }

    pub fn tilt(&self) -> T {
        self.c
    }
}

fn check_shape(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("PG shape must be positive, got {b}")))
    }
}

/// `E[PG(b, c)] = b / (2c) · tanh(c / 2)`, with the limit `b / 4` at `c = 0`.
pub fn pg_mean<T: Real>(b: T, c: T) -> Result<T> {
    check_shape(b.as_f64())?;
    Ok(pg_mean_unchecked(b, c))
}

/// [`pg_mean`] without the shape check, for hot loops that already validated it.
#[inline]
pub fn pg_mean_unchecked<T: Real>(b: T, c: T) -> T {
    let c = c.abs();
    let half = T::lit(0.5);
    if c < T::lit(1e-4) {
        // b/4 · (1 - c²/12 + c⁴/120)
        let c2 = c * c;
        b * T::lit(0.25) * (T::one() - c2 / T::lit(12.0) + c2 * c2 / T::lit(120.0))
    } else {
        b / (c + c) * (c * half).tanh()
    }
}

/// `Var[PG(b, c)] = b / (4c³) · (sinh c - c) / cosh²(c / 2)`, `b / 24` at `c = 0`.
pub fn pg_variance(b: f64, c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-2 {
        // b/24 · (1 - c²/5 + 17c⁴/560)
        let c2 = c * c;
        b / 24.0 * (1.0 - c2 / 5.0 + 17.0 * c2 * c2 / 560.0)
    } else {
        let ch = (0.5 * c).cosh();
        b / (4.0 * c * c * c) * (c.sinh() - c) / (ch * ch)
    }
}

/// One PG(b, c) variate.
pub fn draw_pg<T: Real, R: Rng + ?Sized>(params: &PgParams<T>, rng: &mut R) -> T {
    T::lit(sample_pg(params.b.as_f64(), params.c.as_f64(), rng))
}

/// Unvalidated `f64` sampler used inside the Gibbs sweeps.
///
/// `b` must be positive and finite.
pub fn sample_pg<R: Rng + ?Sized>(b: f64, c: f64, rng: &mut R) -> f64 {
    debug_assert!(b > 0.0 && b.is_finite());
    if b > NORMAL_APPROX_SHAPE {
        let mean = pg_mean_unchecked(b, c);
        let sd = pg_variance(b, c).sqrt();
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        return (mean + sd * z).max(0.0);
    }
    let whole = b.floor();
    let frac = b - whole;
    let mut total = 0.0;
    for _ in 0..whole as usize {
        total += devroye::sample_unit(c, rng);
    }
    if frac > 0.0 {
        total += sample_fractional(frac, c, rng);
    }
    total
}

/// Truncated-series variate `(1/2π²) Σ_{k ≤ truncation} g_k / d_k`.
///
/// Kept deliberately naive: it is the independent reference the exact
/// sampler is checked against.
pub fn draw_pg_series_oracle<T: Real, R: Rng + ?Sized>(
    params: &PgParams<T>,
    truncation: usize,
    rng: &mut R,
) -> Result<T> {
    if truncation == 0 {
        return Err(Error::Domain("series truncation must be at least 1".into()));
    }
    let b = params.b.as_f64();
    let c = params.c.as_f64();
    let gamma = Gamma::new(b, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    let tilt = c * c / (4.0 * PI * PI);
    let mut sum = 0.0;
    for k in 1..=truncation {
        let h = k as f64 - 0.5;
        sum += gamma.sample(rng) / (h * h + tilt);
    }
    Ok(T::lit(sum / TWO_PI_SQ))
}

fn sample_fractional<R: Rng + ?Sized>(frac: f64, c: f64, rng: &mut R) -> f64 {
    let gamma = Gamma::new(frac, 1.0).expect("fractional shape in (0, 1)");
    let tilt = c * c / (4.0 * PI * PI);
    let mut sum = 0.0;
    for k in 1..=FRACTIONAL_EXACT_TERMS {
        let h = k as f64 - 0.5;
        sum += gamma.sample(rng) / (h * h + tilt);
    }
    let (s1, s2) = series_tail_moments(FRACTIONAL_EXACT_TERMS, tilt);
    let tail_shape = frac * s1 * s1 / s2;
    let tail_scale = s2 / s1;
    sum += Gamma::new(tail_shape, tail_scale)
        .expect("positive tail moments")
        .sample(rng);
    sum / TWO_PI_SQ
}

/// `(Σ_{k > from} 1/d_k, Σ_{k > from} 1/d_k²)` with `d_k = (k - 1/2)² + tilt`.
///
/// Summed directly up to `4·from`, with the remaining tail from the
/// integral plus the first midpoint-rule correction.
fn series_tail_moments(from: usize, tilt: f64) -> (f64, f64) {
    let upto = 4 * from;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for k in from + 1..=upto {
        let h = k as f64 - 0.5;
        let inv = 1.0 / (h * h + tilt);
        s1 += inv;
        s2 += inv * inv;
    }
    let edge = upto as f64;
    let a = tilt.sqrt();
    let r = a / edge;
    // ∫_edge^∞ dx / (x² + a²) and ∫_edge^∞ dx / (x² + a²)²
    let i1 = if r < 1e-4 {
        (1.0 - r * r / 3.0) / edge
    } else {
        r.atan() / a
    };
    let i2 = if r < 0.1 {
        let rr = r * r;
        let mut acc = 0.0;
        let mut pow = 1.0;
        for n in 0..8 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * (n as f64 + 1.0) * pow / (3.0 + 2.0 * n as f64);
            pow *= rr;
        }
        acc / (edge * edge * edge)
    } else {
        r.atan() / (2.0 * a * a * a) - edge / (2.0 * a * a * (edge * edge + a * a))
    };
    let d = edge * edge + a * a;
    let c1 = -2.0 * edge / (d * d) / 24.0;
    let c2 = -4.0 * edge / (d * d * d) / 24.0;
    (s1 + i1 + c1, s2 + i2 + c2)
}
