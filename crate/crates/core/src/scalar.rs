//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! The models are written against [`Real`] so the same code runs in `f64`
//! (the default, see the aliases at the crate root) or `f32` when memory
//! matters more than the last few digits. Random variates are always produced
//! in `f64` and narrowed afterwards, so a seeded run draws the same stream
//! regardless of the working precision.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the samplers and the variational fits.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Default + Display + Debug + Send + Sync + 'static
{
    /// Converts an `f64` constant into the working precision.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    /// Widens to `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("finite scalar")
    }

    #[inline]
    fn count(n: usize) -> Self {
        Self::lit(n as f64)
    }

    #[inline]
    fn is_finite_real(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Numerically stable logistic function.
#[inline]
pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(2 cosh(x / 2))`, stable for large `|x|`.
#[inline]
pub fn log_two_cosh_half<T: Real>(x: T) -> T {
    let a = x.abs() * T::lit(0.5);
    a + (T::one() + (-a - a).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_is_symmetric_and_saturates() {
        assert_eq!(logistic(0.0_f64), 0.5);
        assert!((logistic(1.0_f64) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((logistic(3.0_f64) + logistic(-3.0_f64) - 1.0).abs() < 1e-15);
        assert_eq!(logistic(-800.0_f64), 0.0);
        assert_eq!(logistic(800.0_f64), 1.0);
        assert!((logistic(1.0_f32) - 0.731_058_6).abs() < 1e-6);
    }

    #[test]
    fn log_cosh_matches_direct_formula() {
        for &x in &[0.0_f64, 0.3, -2.0, 10.0] {
            let direct = (2.0 * (x / 2.0).cosh()).ln();
            assert!((log_two_cosh_half(x) - direct).abs() < 1e-12);
        }
        assert!((log_two_cosh_half(2000.0_f64) - 1000.0).abs() < 1e-9);
    }
}
