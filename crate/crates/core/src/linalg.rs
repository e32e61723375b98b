use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Real;

const JITTER: f64 = 1e-10;

/// Cholesky factor of a symmetric positive definite matrix, retried once
/// with a `1e-10` diagonal jitter (relative to the largest diagonal entry
/// when that exceeds 1).
pub fn cholesky<T: Real>(p: DMatrix<T>, block: &str) -> Result<Cholesky<T, Dyn>> {
    if let Some(c) = Cholesky::new(p.clone()) {
        return Ok(c);
    }
    let scale = p
        .diagonal()
        .iter()
        .fold(T::one(), |acc, &d| if d > acc { d } else { acc });
    let mut q = p;
    let j = T::lit(JITTER) * scale;
    for i in 0..q.nrows() {
        q[(i, i)] += j;
    }
    Cholesky::new(q).ok_or_else(|| Error::Singular {
        block: block.to_string(),
    })
}

/// Draw from `N(P⁻¹ b, P⁻¹)` given the factor of `P`; returns the mean too.
pub fn draw_canonical<T: Real, R: Rng + ?Sized>(
    chol: &Cholesky<T, Dyn>,
    rhs: &DVector<T>,
    rng: &mut R,
) -> (DVector<T>, DVector<T>) {
    let mean = chol.solve(rhs);
    let z = DVector::from_fn(rhs.len(), |_, _| T::lit(rng.sample(StandardNormal)));
    let lt = chol.l().transpose();
    let dev = lt
        .solve_upper_triangular(&z)
        .expect("Cholesky factor has a positive diagonal");
    (mean.clone() + dev, mean)
}
