//! Coordinate-ascent variational inference for the same models as
//! [`crate::gibbs`].
//!
//! The mean-field family is `q(γ, β, η) q(φ) q(σ²_η) q(σ²_η1)` with the
//! PG variables handled through their tilted means `ω̌ = E[PG(w̃n, ξ)]`.
//! Each sweep updates `ω̌`, runs the blockwise coefficient passes, refreshes
//! the joint Gaussian factor, then the AR(1) and variance factors and the
//! tilts `ξ`. Variance factors are stored as expected precisions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gibbs::{Dynamics, FitConfig, PosteriorDraws};
use crate::linalg::cholesky;
use crate::pg::pg_mean_unchecked;
use crate::rng::child_seed;
use crate::scalar::{log_two_cosh_half, Real};
use crate::survey::{CutpointLayout, Family, StickBrokenDesign, TimeStructure};
use crate::truncnorm::{sample_truncated_normal, truncated_normal_moments};

/// Current variational parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState<T: Real> {
    /// Means stacked as `(γ, β, η_1, …, η_T)`.
    pub mu: DVector<T>,
    /// Joint covariance of the stacked coefficients.
    pub sigma: DMatrix<T>,
    /// One tilt per design row.
    pub xi: Vec<T>,
    /// `E[φ]` and `E[φ²]` under the truncated normal factor.
    pub mu_phi: T,
    pub mu_phi2: T,
    /// Location and variance of the untruncated normal behind `q(φ)`.
    pub phi_location: T,
    pub sigma2_phi: T,
    /// `E[1/σ²_η]` and `E[1/σ²_η1]`.
    pub prec_eta: T,
    pub prec_eta1: T,
    /// Inverse-gamma `(shape, scale)` of `q(σ²_η)` and `q(σ²_η1)`.
    pub ig_eta: (T, T),
    pub ig_eta1: (T, T),
    pub n_cutpoints: usize,
    pub n_covariates: usize,
    pub n_basis: usize,
    pub n_times: usize,
    pub dynamics: Dynamics,
    pub family: Family,
    pub layout: CutpointLayout,
}

impl<T: Real> VariationalState<T> {
    fn beta_offset(&self) -> usize {
        self.n_cutpoints
    }

    fn eta_offset(&self, t: usize) -> usize {
        self.n_cutpoints + self.n_covariates + (t - 1) * self.n_basis
    }

    pub fn mu_gamma(&self) -> &[T] {
        &self.mu.as_slice()[..self.n_cutpoints]
    }

    pub fn mu_beta(&self) -> &[T] {
        let o = self.beta_offset();
        &self.mu.as_slice()[o..o + self.n_covariates]
    }

    /// `E[η_t]`, `t` 1-based.
    pub fn mu_eta(&self, t: usize) -> &[T] {
        let o = self.eta_offset(t);
        &self.mu.as_slice()[o..o + self.n_basis]
    }

    /// Marginal variances of `β`.
    pub fn var_beta(&self) -> Vec<T> {
        let o = self.beta_offset();
        (o..o + self.n_covariates).map(|j| self.sigma[(j, j)]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaviReport {
    pub iterations: usize,
    /// Largest absolute parameter change per sweep.
    pub trajectory: Vec<f64>,
    /// Gaussian entropy plus the bounded expected log pseudo-likelihood per
    /// sweep. A monitor only, not the full ELBO.
    pub surrogate: Vec<f64>,
    pub converged: bool,
}

pub fn fit_vb_ordinal_cs<T: Real>(
    design: &StickBrokenDesign<T>,
    cfg: &FitConfig,
) -> Result<(VariationalState<T>, CaviReport)> {
    if design.family() != Family::Ordinal || design.n_times() != 1 {
        return Err(Error::Dimension(
            "fit_vb_ordinal_cs needs a cross-sectional ordinal design".into(),
        ));
    }
    run_cavi(design, cfg, Dynamics::Independent)
}

pub fn fit_vb_ordinal_long<T: Real>(
    design: &StickBrokenDesign<T>,
    cfg: &FitConfig,
) -> Result<(VariationalState<T>, CaviReport)> {
    if design.family() != Family::Ordinal {
        return Err(Error::Dimension(
            "fit_vb_ordinal_long needs an ordinal design".into(),
        ));
    }
    if design.n_times() < 2 {
        return Err(Error::SingleTimePoint);
    }
    run_cavi(design, cfg, Dynamics::Ar1)
}

/// Longitudinal fit of one binary stick level (no cutpoints).
pub fn fit_vb_binary_long<T: Real>(
    design: &StickBrokenDesign<T>,
    cfg: &FitConfig,
) -> Result<(VariationalState<T>, CaviReport)> {
    if !matches!(design.family(), Family::Binary { .. }) {
        return Err(Error::Dimension(
            "fit_vb_binary_long needs a binary design".into(),
        ));
    }
    if design.n_times() < 2 {
        return Err(Error::SingleTimePoint);
    }
    run_cavi(design, cfg, Dynamics::Ar1)
}

pub fn fit_vb_binary_cs<T: Real>(
    design: &StickBrokenDesign<T>,
    cfg: &FitConfig,
) -> Result<(VariationalState<T>, CaviReport)> {
    if !matches!(design.family(), Family::Binary { .. }) || design.n_times() != 1 {
        return Err(Error::Dimension(
            "fit_vb_binary_cs needs a cross-sectional binary design".into(),
        ));
    }
    run_cavi(design, cfg, Dynamics::Independent)
}

/// `K - 1` independent binary fits, in parallel.
pub fn fit_vb_nominal<T: Real>(
    designs: &[StickBrokenDesign<T>],
    cfg: &FitConfig,
    longitudinal: bool,
) -> Result<Vec<(VariationalState<T>, CaviReport)>> {
    designs
        .par_iter()
        .map(|d| {
            if longitudinal && !matches!(d.time_structure(), TimeStructure::Longitudinal { .. }) {
                return Err(Error::SingleTimePoint);
            }
            if longitudinal {
                fit_vb_binary_long(d, cfg)
            } else {
                fit_vb_binary_cs(d, cfg)
            }
        })
        .collect()
}

/// CAVI on any design. An empty design returns the prior.
pub fn run_cavi<T: Real>(
    design: &StickBrokenDesign<T>,
    cfg: &FitConfig,
    dynamics: Dynamics,
) -> Result<(VariationalState<T>, CaviReport)> {
    cfg.validate()?;
    let cavi = Cavi::new(design, cfg, dynamics);
    let mut state = cavi.initial_state();
    let mut report = CaviReport {
        iterations: 0,
        trajectory: Vec::new(),
        surrogate: Vec::new(),
        converged: false,
    };
    for _ in 0..cfg.max_iterations {
        let (change, surrogate) = cavi.sweep(&mut state)?;
        report.iterations += 1;
        report.trajectory.push(change);
        report.surrogate.push(surrogate);
        if change < cfg.tolerance {
            report.converged = true;
            break;
        }
    }
    Ok((state, report))
}

/// One more CAVI sweep on an existing state; returns the largest change.
pub fn cavi_sweep<T: Real>(
    design: &StickBrokenDesign<T>,
    cfg: &FitConfig,
    state: &mut VariationalState<T>,
) -> Result<f64> {
    let cavi = Cavi::new(design, cfg, state.dynamics);
    Ok(cavi.sweep(state)?.0)
}

/// `R` draws from the variational posterior.
pub fn draw_variational<T: Real, R: Rng + ?Sized>(
    state: &VariationalState<T>,
    n_draws: usize,
    rng: &mut R,
) -> Result<PosteriorDraws<T>> {
    let p = state.mu.len();
    let chol = cholesky(state.sigma.clone(), "variational covariance")?;
    let l = chol.l();
    let g = state.n_cutpoints;
    let q = state.n_covariates;
    let mt = state.n_basis * state.n_times;
    let mut out = PosteriorDraws {
        gamma: DMatrix::zeros(n_draws, g),
        beta: DMatrix::zeros(n_draws, q),
        eta: DMatrix::zeros(n_draws, mt),
        phi: Vec::new(),
        sigma2_eta: Vec::with_capacity(n_draws),
        sigma2_eta1: Vec::new(),
        n_basis: state.n_basis,
        n_times: state.n_times,
        family: state.family,
        layout: state.layout,
    };
    let ig = |(shape, scale): (T, T)| {
        Gamma::new(shape.as_f64(), 1.0 / scale.as_f64())
            .map_err(|e| Error::Domain(format!("inverse-gamma factor: {e}")))
    };
    let ig_eta = ig(state.ig_eta)?;
    let ig_eta1 = ig(state.ig_eta1)?;
    for r in 0..n_draws {
        let z = DVector::from_fn(p, |_, _| T::lit(rng.sample(rand_distr::StandardNormal)));
        let theta = &state.mu + &l * z;
        for j in 0..g {
            out.gamma[(r, j)] = theta[j];
        }
        for j in 0..q {
            out.beta[(r, j)] = theta[g + j];
        }
        for j in 0..mt {
            out.eta[(r, j)] = theta[g + q + j];
        }
        out.sigma2_eta.push(T::lit(1.0 / ig_eta.sample(rng)));
        if state.dynamics == Dynamics::Ar1 {
            let phi = sample_truncated_normal(
                state.phi_location.as_f64(),
                state.sigma2_phi.as_f64().sqrt(),
                -1.0,
                1.0,
                rng,
            )?;
            out.phi.push(T::lit(phi));
            out.sigma2_eta1.push(T::lit(1.0 / ig_eta1.sample(rng)));
        }
    }
    Ok(out)
}

/// Truncated normal `(E[φ], E[φ²])` given the untruncated location and
/// variance, on `(-1, 1)`.
pub fn phi_moments(location: f64, variance: f64) -> Result<(f64, f64)> {
    let (m, v) = truncated_normal_moments(location, variance.sqrt(), -1.0, 1.0)?;
    Ok((m, v + m * m))
}

/// Subtracts the mean so the entries sum to zero.
pub fn center<T: Real>(v: &mut [T]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().fold(T::zero(), |a, &b| a + b) / T::count(v.len());
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Nonzero pattern of the stacked design rows `c_i`.
struct SparseRows<T> {
    width: usize,
    idx: Vec<usize>,
    val: Vec<T>,
}

impl<T: Real> SparseRows<T> {
    fn row(&self, i: usize) -> (&[usize], &[T]) {
        let s = i * self.width;
        (&self.idx[s..s + self.width], &self.val[s..s + self.width])
    }

    fn dot(&self, i: usize, v: &DVector<T>) -> T {
        let (idx, val) = self.row(i);
        idx.iter()
            .zip(val)
            .fold(T::zero(), |acc, (&j, &c)| acc + c * v[j])
    }

    fn quad(&self, i: usize, m: &DMatrix<T>) -> T {
        let (idx, val) = self.row(i);
        let mut s = T::zero();
        for (a, (&ja, &ca)) in idx.iter().zip(val).enumerate() {
            let mut inner = T::zero();
            for (&jb, &cb) in idx[a + 1..].iter().zip(&val[a + 1..]) {
                inner += cb * m[(ja, jb)];
            }
            s += ca * (ca * m[(ja, ja)] + (inner + inner));
        }
        s
    }
}

struct Cavi<'a, T: Real> {
    d: &'a StickBrokenDesign<T>,
    dynamics: Dynamics,
    rows: SparseRows<T>,
    shapes: Vec<T>,
    kappa: Vec<T>,
    g: usize,
    q: usize,
    m: usize,
    n_t: usize,
    prec_beta: T,
    prec_gamma: T,
    a: T,
    b: T,
    fixed_phi: Option<f64>,
}

impl<'a, T: Real> Cavi<'a, T> {
    fn new(d: &'a StickBrokenDesign<T>, cfg: &FitConfig, dynamics: Dynamics) -> Self {
        let g = d.n_cutpoints();
        let q = d.n_covariates();
        let m = d.n_basis();
        let has_cut = g > 0;
        let width = usize::from(has_cut) + q + m;
        let n = d.n_rows();
        let mut idx = Vec::with_capacity(n * width);
        let mut val = Vec::with_capacity(n * width);
        for (i, row) in d.rows().iter().enumerate() {
            if has_cut {
                idx.push(row.cutpoint.expect("ordinal rows carry a cutpoint"));
                val.push(T::one());
            }
            for j in 0..q {
                idx.push(g + j);
                val.push(d.x_rows()[(i, j)]);
            }
            let o = g + q + (row.time - 1) * m;
            for j in 0..m {
                idx.push(o + j);
                val.push(d.psi_rows()[(i, j)]);
            }
        }
        let fixed_phi = match dynamics {
            Dynamics::Ar1 => cfg.fixed_phi,
            Dynamics::Independent => None,
        };
        Self {
            d,
            dynamics,
            rows: SparseRows { width, idx, val },
            shapes: d.rows().iter().map(|r| r.shape()).collect(),
            kappa: d.rows().iter().map(|r| r.kappa).collect(),
            g,
            q,
            m,
            n_t: d.n_times(),
            prec_beta: T::one() / T::lit(cfg.sigma2_beta),
            prec_gamma: T::one() / T::lit(cfg.sigma2_gamma),
            a: T::lit(cfg.a),
            b: T::lit(cfg.b),
            fixed_phi,
        }
    }

    fn dim(&self) -> usize {
        self.g + self.q + self.m * self.n_t
    }

    fn initial_state(&self) -> VariationalState<T> {
        let p = self.dim();
        let prec0 = self.a / self.b;
        let (mu_phi, mu_phi2) = match self.fixed_phi {
            Some(phi) => (T::lit(phi), T::lit(phi * phi)),
            None => (T::zero(), T::lit(1.0 / 3.0)),
        };
        let mut sigma = DMatrix::zeros(p, p);
        for j in 0..p {
            sigma[(j, j)] = if j < self.g {
                T::one() / self.prec_gamma
            } else if j < self.g + self.q {
                T::one() / self.prec_beta
            } else {
                T::one() / prec0
            };
        }
        VariationalState {
            mu: DVector::zeros(p),
            sigma,
            xi: vec![T::one(); self.d.n_rows()],
            mu_phi,
            mu_phi2,
            phi_location: mu_phi,
            sigma2_phi: T::one(),
            prec_eta: prec0,
            prec_eta1: prec0,
            ig_eta: (self.a, self.b),
            ig_eta1: (self.a, self.b),
            n_cutpoints: self.g,
            n_covariates: self.q,
            n_basis: self.m,
            n_times: self.n_t,
            dynamics: self.dynamics,
            family: self.d.family(),
            layout: self.d.layout(),
        }
    }

    /// `E[η_t]` prior precision on the diagonal block `t` and the coupling
    /// to `t + 1`.
    fn eta_prior(&self, s: &VariationalState<T>, t: usize) -> (T, T) {
        match self.dynamics {
            Dynamics::Independent => (s.prec_eta, T::zero()),
            Dynamics::Ar1 => {
                let diag = if t == 1 {
                    s.prec_eta1
                        + if self.n_t > 1 {
                            s.mu_phi2 * s.prec_eta
                        } else {
                            T::zero()
                        }
                } else if t < self.n_t {
                    (T::one() + s.mu_phi2) * s.prec_eta
                } else {
                    s.prec_eta
                };
                (diag, -s.mu_phi * s.prec_eta)
            }
        }
    }

    fn sweep(&self, s: &mut VariationalState<T>) -> Result<(f64, f64)> {
        let n = self.d.n_rows();
        let omega: Vec<T> = (0..n)
            .map(|i| pg_mean_unchecked(self.shapes[i], s.xi[i]))
            .collect();
        let old_mu = s.mu.clone();
        let old = (s.mu_phi, s.prec_eta, s.prec_eta1);

        self.blockwise(s, &omega)?;
        let log_det = self.joint_refresh(s, &omega)?;
        if self.dynamics == Dynamics::Ar1 {
            self.update_phi(s)?;
        }
        self.update_precisions(s);
        let mut surrogate = 0.5 * log_det;
        for i in 0..n {
            let lin = self.rows.dot(i, &s.mu);
            let second = self.rows.quad(i, &s.sigma) + lin * lin;
            s.xi[i] = second.max(T::zero()).sqrt();
            surrogate += (self.kappa[i] * lin - self.shapes[i] * log_two_cosh_half(s.xi[i])).as_f64();
        }

        let mut change = (&s.mu - &old_mu).amax().as_f64();
        change = change
            .max((s.mu_phi - old.0).abs().as_f64())
            .max((s.prec_eta - old.1).abs().as_f64())
            .max((s.prec_eta1 - old.2).abs().as_f64());
        Ok((change, surrogate))
    }

    /// Row offsets excluding the given coordinate range.
    fn partial_residuals(&self, s: &VariationalState<T>, omega: &[T], lo: usize, hi: usize) -> Vec<T> {
        (0..self.d.n_rows())
            .map(|i| {
                let (idx, val) = self.rows.row(i);
                let off = idx
                    .iter()
                    .zip(val)
                    .filter(|(&j, _)| j < lo || j >= hi)
                    .fold(T::zero(), |acc, (&j, &c)| acc + c * s.mu[j]);
                self.kappa[i] - omega[i] * off
            })
            .collect()
    }

    /// Gauss-Seidel passes over `β`, `γ` and each `η_t`, with `η_1`
    /// centred to sum to zero.
    fn blockwise(&self, s: &mut VariationalState<T>, omega: &[T]) -> Result<()> {
        // β
        if self.q > 0 {
            let (lo, hi) = (self.g, self.g + self.q);
            let r = self.partial_residuals(s, omega, lo, hi);
            let mut p = DMatrix::identity(self.q, self.q) * self.prec_beta;
            let mut rhs = DVector::zeros(self.q);
            for i in 0..self.d.n_rows() {
                let x = self.d.x_rows().row(i).transpose();
                p.ger(omega[i], &x, &x, T::one());
                rhs.axpy(r[i], &x, T::one());
            }
            let mean = cholesky(p, "beta")?.solve(&rhs);
            s.mu.rows_mut(lo, self.q).copy_from(&mean);
        }
        // γ
        if self.g > 0 {
            let r = self.partial_residuals(s, omega, 0, self.g);
            let mut p = DVector::from_element(self.g, self.prec_gamma);
            let mut rhs = DVector::<T>::zeros(self.g);
            for (i, row) in self.d.rows().iter().enumerate() {
                let c = row.cutpoint.expect("ordinal rows carry a cutpoint");
                p[c] += omega[i];
                rhs[c] += r[i];
            }
            for c in 0..self.g {
                s.mu[c] = rhs[c] / p[c];
            }
        }
        // η_1 .. η_T
        if self.m > 0 {
            for t in 1..=self.n_t {
                let lo = s.eta_offset(t);
                let r = self.partial_residuals(s, omega, lo, lo + self.m);
                let (diag, coupling) = self.eta_prior(s, t);
                let mut p = DMatrix::identity(self.m, self.m) * diag;
                let mut rhs = DVector::zeros(self.m);
                for &i in &self.d.rows_by_time()[t - 1] {
                    let psi = self.d.psi_rows().row(i).transpose();
                    p.ger(omega[i], &psi, &psi, T::one());
                    rhs.axpy(r[i], &psi, T::one());
                }
                if self.dynamics == Dynamics::Ar1 {
                    let pull = -coupling;
                    if t > 1 {
                        let prev = s.eta_offset(t - 1);
                        rhs += s.mu.rows(prev, self.m) * pull;
                    }
                    if t < self.n_t {
                        let next = s.eta_offset(t + 1);
                        rhs += s.mu.rows(next, self.m) * pull;
                    }
                }
                let mean = cholesky(p, &format!("eta_{t}"))?.solve(&rhs);
                s.mu.rows_mut(lo, self.m).copy_from(&mean);
                if t == 1 && self.dynamics == Dynamics::Ar1 {
                    center(&mut s.mu.as_mut_slice()[lo..lo + self.m]);
                }
            }
        }
        Ok(())
    }

    /// `Σ = (Q + C'ΩC)⁻¹`, `μ = ΣC'κ`; returns `ln det Σ`.
    fn joint_refresh(&self, s: &mut VariationalState<T>, omega: &[T]) -> Result<f64> {
        let p_dim = self.dim();
        let mut p = DMatrix::zeros(p_dim, p_dim);
        for j in 0..self.g {
            p[(j, j)] = self.prec_gamma;
        }
        for j in self.g..self.g + self.q {
            p[(j, j)] = self.prec_beta;
        }
        for t in 1..=self.n_t {
            let (diag, coupling) = self.eta_prior(s, t);
            let o = s.eta_offset(t);
            for j in 0..self.m {
                p[(o + j, o + j)] = diag;
                if t < self.n_t && coupling != T::zero() {
                    let o2 = s.eta_offset(t + 1);
                    p[(o + j, o2 + j)] = coupling;
                    p[(o2 + j, o + j)] = coupling;
                }
            }
        }
        let mut rhs = DVector::zeros(p_dim);
        for i in 0..self.d.n_rows() {
            let (idx, val) = self.rows.row(i);
            let w = omega[i];
            for (a, (&ja, &ca)) in idx.iter().zip(val).enumerate() {
                rhs[ja] += ca * self.kappa[i];
                let wc = w * ca;
                p[(ja, ja)] += wc * ca;
                for (&jb, &cb) in idx[a + 1..].iter().zip(&val[a + 1..]) {
                    p[(ja, jb)] += wc * cb;
                    p[(jb, ja)] += wc * cb;
                }
            }
        }
        let chol = cholesky(p, "joint")?;
        let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.as_f64().ln()).sum();
        s.mu = chol.solve(&rhs);
        s.sigma = chol.inverse();
        Ok(-2.0 * log_det)
    }

    /// `E[η_t'η_u]` from the joint factor.
    fn cross_moment(&self, s: &VariationalState<T>, t: usize, u: usize) -> T {
        let ot = s.eta_offset(t);
        let ou = s.eta_offset(u);
        let mut v = T::zero();
        for j in 0..self.m {
            v += s.mu[ot + j] * s.mu[ou + j] + s.sigma[(ot + j, ou + j)];
        }
        v
    }

    fn update_phi(&self, s: &mut VariationalState<T>) -> Result<()> {
        if let Some(phi) = self.fixed_phi {
            s.mu_phi = T::lit(phi);
            s.mu_phi2 = T::lit(phi * phi);
            return Ok(());
        }
        let mut lagged = 0.0;
        let mut cross = 0.0;
        for t in 1..self.n_t {
            lagged += self.cross_moment(s, t, t).as_f64();
            cross += self.cross_moment(s, t, t + 1).as_f64();
        }
        if self.m == 0 || lagged <= 0.0 {
            // uniform prior on (-1, 1)
            s.mu_phi = T::zero();
            s.mu_phi2 = T::lit(1.0 / 3.0);
            return Ok(());
        }
        let loc = cross / lagged;
        let var = 1.0 / (s.prec_eta.as_f64() * lagged);
        let (m1, m2) = phi_moments(loc, var)?;
        s.phi_location = T::lit(loc);
        s.sigma2_phi = T::lit(var);
        s.mu_phi = T::lit(m1);
        s.mu_phi2 = T::lit(m2.max(m1 * m1));
        Ok(())
    }

    fn update_precisions(&self, s: &mut VariationalState<T>) {
        let half = T::lit(0.5);
        let m = T::count(self.m);
        match self.dynamics {
            Dynamics::Independent => {
                let mut ss = T::zero();
                for t in 1..=self.n_t {
                    ss += self.cross_moment(s, t, t);
                }
                let shape = self.a + half * m * T::count(self.n_t);
                let scale = self.b + half * ss;
                s.ig_eta = (shape, scale);
                s.prec_eta = shape / scale;
            }
            Dynamics::Ar1 => {
                let shape1 = self.a + half * m;
                let scale1 = self.b + half * self.cross_moment(s, 1, 1);
                s.ig_eta1 = (shape1, scale1);
                s.prec_eta1 = shape1 / scale1;
                let mut ss = T::zero();
                for t in 2..=self.n_t {
                    ss += self.cross_moment(s, t, t) - (s.mu_phi + s.mu_phi) * self.cross_moment(s, t - 1, t)
                        + s.mu_phi2 * self.cross_moment(s, t - 1, t - 1);
                }
                let shape = self.a + half * m * T::count(self.n_t - 1);
                let scale = self.b + half * ss.max(T::zero());
                s.ig_eta = (shape, scale);
                s.prec_eta = shape / scale;
            }
        }
    }
}

/// Seeds for the variational draws of nominal level `level`.
pub fn nominal_draw_seed(seed: u64, level: usize) -> u64 {
    child_seed(seed, 1000 + level as u64)
}
