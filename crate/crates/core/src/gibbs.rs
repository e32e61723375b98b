//! Pólya-Gamma Gibbs samplers for the weighted sequential models.
//!
//! Given the PG variables every coefficient block is Gaussian, so one sweep
//! is: draw `ω`, draw the variance (and AR(1)) parameters, then `β`, `γ` and
//! the spatial effects `η_t` in turn, each from its exact conditional.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{cholesky, draw_canonical};
use crate::pg::sample_pg;
use crate::rng::{child_seed, stream_rng};
use crate::scalar::Real;
use crate::survey::{CutpointLayout, Family, StickBrokenDesign, TimeStructure};
use crate::truncnorm::sample_truncated_normal;

/// Sampler and prior settings shared by the Gibbs and variational fits.
#[derive(Debug, Clone, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Retained draws `R`.
    pub n_draws: usize,
    pub burn_in: usize,
    pub sigma2_beta: f64,
    pub sigma2_gamma: f64,
    /// Inverse-gamma shape of the random-effect variances.
    pub a: f64,
    /// Inverse-gamma scale of the random-effect variances.
    pub b: f64,
    pub seed: u64,
    /// Hold the AR(1) coefficient at this value instead of sampling it.
    pub fixed_phi: Option<f64>,
    /// CAVI stops once no parameter moves more than this in a sweep.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_draws: 1500,
            burn_in: 500,
            sigma2_beta: 100.0,
            sigma2_gamma: 100.0,
            a: 0.5,
            b: 0.5,
            seed: 1,
            fixed_phi: None,
            tolerance: 1e-6,
            max_iterations: 500,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma2_beta", self.sigma2_beta),
            ("sigma2_gamma", self.sigma2_gamma),
            ("a", self.a),
            ("b", self.b),
            ("tolerance", self.tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_draws == 0 {
            return Err(Error::Config("at least one draw is required".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if let Some(phi) = self.fixed_phi {
            if !(phi > -1.0 && phi < 1.0) {
                return Err(Error::Config(format!("fixed phi must lie in (-1, 1), got {phi}")));
            }
        }
        Ok(())
    }
}

/// Retained posterior (or variational) draws, one row per draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws<T: Real> {
    /// `R × g` cutpoints (no columns for binary fits).
    pub gamma: DMatrix<T>,
    /// `R × q`.
    pub beta: DMatrix<T>,
    /// `R × mT`, block `t` in columns `(t - 1)m .. tm`.
    pub eta: DMatrix<T>,
    /// AR(1) coefficient; empty for cross-sectional fits.
    pub phi: Vec<T>,
    pub sigma2_eta: Vec<T>,
    /// Variance of `η_1`; empty for cross-sectional fits.
    pub sigma2_eta1: Vec<T>,
    pub n_basis: usize,
    pub n_times: usize,
    pub family: Family,
    pub layout: CutpointLayout,
}

impl<T: Real> PosteriorDraws<T> {
    pub fn n_draws(&self) -> usize {
        self.beta.nrows()
    }

    /// `η_t` of draw `r` (`t` 1-based).
    pub fn eta_at(&self, r: usize, t: usize) -> DVector<T> {
        let m = self.n_basis;
        DVector::from_fn(m, |j, _| self.eta[(r, (t - 1) * m + j)])
    }

    /// Posterior mean of each column of a block.
    pub fn column_means(block: &DMatrix<T>) -> Vec<T> {
        let n = T::count(block.nrows().max(1));
        block.column_iter().map(|c| c.sum() / n).collect()
    }

    pub fn is_longitudinal(&self) -> bool {
        !self.phi.is_empty()
    }
}

/// Dynamics of the spatial effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    /// One `η` per time block with an exchangeable `N(0, σ²_η I)` prior.
    Independent,
    /// `η_1 ~ N(0, σ²_η1 I)`, `η_t | η_{t-1} ~ N(φ η_{t-1}, σ²_η I)`.
    Ar1,
}

/// Cross-sectional ordinal fit.
pub fn fit_ordinal_cs<T: Real>(design: &StickBrokenDesign<T>, cfg: &FitConfig) -> Result<PosteriorDraws<T>> {
    if design.family() != Family::Ordinal || design.n_times() != 1 {
        return Err(Error::Dimension(
            "fit_ordinal_cs needs a cross-sectional ordinal design".into(),
        ));
    }
    if design.is_empty() {
        return Err(Error::EmptyDesign);
    }
    run_gibbs(design, cfg, Dynamics::Independent)
}

/// Longitudinal ordinal fit with AR(1) spatial effects.
pub fn fit_ordinal_long<T: Real>(
    design: &StickBrokenDesign<T>,
    cfg: &FitConfig,
) -> Result<PosteriorDraws<T>> {
    if design.family() != Family::Ordinal {
        return Err(Error::Dimension(
            "fit_ordinal_long needs an ordinal design".into(),
        ));
    }
    if design.n_times() < 2 {
        return Err(Error::SingleTimePoint);
    }
    if design.is_empty() {
        return Err(Error::EmptyDesign);
    }
    run_gibbs(design, cfg, Dynamics::Ar1)
}

/// The `K - 1` independent binary fits of the nominal model.
///
/// Fits run in parallel; each level draws from its own stream keyed by the
/// level, so results do not depend on the order or thread count.
pub fn fit_nominal<T: Real>(
    designs: &[StickBrokenDesign<T>],
    cfg: &FitConfig,
    longitudinal: bool,
) -> Result<Vec<PosteriorDraws<T>>> {
    designs
        .par_iter()
        .map(|d| {
            let Family::Binary { level } = d.family() else {
                return Err(Error::Dimension("fit_nominal needs binary designs".into()));
            };
            if d.is_empty() {
                return Err(Error::EmptyDesign);
            }
            let dynamics = match (longitudinal, d.time_structure()) {
                (false, _) => Dynamics::Independent,
                (true, TimeStructure::Longitudinal { n_times }) if n_times >= 2 => Dynamics::Ar1,
                (true, _) => return Err(Error::SingleTimePoint),
            };
            let sub = FitConfig {
                seed: child_seed(cfg.seed, level as u64),
                ..cfg.clone()
            };
            run_gibbs(d, &sub, dynamics)
        })
        .collect()
}

/// Runs the chain on any design, including an empty one (which samples the
/// prior). The public `fit_*` wrappers add the model checks.
pub fn run_gibbs<T: Real>(
    design: &StickBrokenDesign<T>,
    cfg: &FitConfig,
    dynamics: Dynamics,
) -> Result<PosteriorDraws<T>> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, 0);
    let mut chain = Chain::new(design, cfg, dynamics);
    let g = design.n_cutpoints();
    let q = design.n_covariates();
    let m = design.n_basis();
    let n_t = design.n_times();
    let r = cfg.n_draws;
    let mut out = PosteriorDraws {
        gamma: DMatrix::zeros(r, g),
        beta: DMatrix::zeros(r, q),
        eta: DMatrix::zeros(r, m * n_t),
        phi: Vec::new(),
        sigma2_eta: Vec::with_capacity(r),
        sigma2_eta1: Vec::new(),
        n_basis: m,
        n_times: n_t,
        family: design.family(),
        layout: design.layout(),
    };
    for it in 0..cfg.burn_in + r {
        chain.sweep(&mut rng)?;
        if it < cfg.burn_in {
            continue;
        }
        let row = it - cfg.burn_in;
        for j in 0..g {
            out.gamma[(row, j)] = chain.gamma[j];
        }
        for j in 0..q {
            out.beta[(row, j)] = chain.beta[j];
        }
        for t in 0..n_t {
            for j in 0..m {
                out.eta[(row, t * m + j)] = chain.eta[t][j];
            }
        }
        out.sigma2_eta.push(chain.s2_eta);
        if dynamics == Dynamics::Ar1 {
            out.phi.push(chain.phi);
            out.sigma2_eta1.push(chain.s2_eta1);
        }
    }
    Ok(out)
}

fn draw_inverse_gamma<T: Real, R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> T {
    let g = Gamma::new(shape, 1.0 / scale).expect("positive inverse-gamma parameters");
    T::lit(1.0 / g.sample(rng))
}

struct Chain<'a, T: Real> {
    d: &'a StickBrokenDesign<T>,
    dynamics: Dynamics,
    sigma2_beta: T,
    sigma2_gamma: T,
    a: f64,
    b: f64,
    fixed_phi: Option<f64>,
    /// Signed covariate rows as columns (`q × n`).
    xt: DMatrix<T>,
    /// Signed basis loading of each area (`m × areas`).
    area_psi: DMatrix<T>,
    shapes: Vec<f64>,
    kappa: Vec<T>,
    gamma: DVector<T>,
    beta: DVector<T>,
    eta: Vec<DVector<T>>,
    phi: T,
    s2_eta: T,
    s2_eta1: T,
    omega: Vec<T>,
    cut_part: Vec<T>,
    x_part: Vec<T>,
    psi_part: Vec<T>,
}

impl<'a, T: Real> Chain<'a, T> {
    fn new(d: &'a StickBrokenDesign<T>, cfg: &FitConfig, dynamics: Dynamics) -> Self {
        let n = d.n_rows();
        let m = d.n_basis();
        let n_areas = d.rows().iter().map(|r| r.area).max().unwrap_or(0);
        let mut area_psi = DMatrix::zeros(m, n_areas);
        for (i, row) in d.rows().iter().enumerate() {
            for j in 0..m {
                area_psi[(j, row.area - 1)] = d.psi_rows()[(i, j)];
            }
        }
        let fixed_phi = match dynamics {
            Dynamics::Ar1 => cfg.fixed_phi,
            Dynamics::Independent => None,
        };
        Self {
            d,
            dynamics,
            sigma2_beta: T::lit(cfg.sigma2_beta),
            sigma2_gamma: T::lit(cfg.sigma2_gamma),
            a: cfg.a,
            b: cfg.b,
            fixed_phi,
            xt: d.x_rows().transpose(),
            area_psi,
            shapes: d.rows().iter().map(|r| r.shape().as_f64()).collect(),
            kappa: d.rows().iter().map(|r| r.kappa).collect(),
            gamma: DVector::zeros(d.n_cutpoints()),
            beta: DVector::zeros(d.n_covariates()),
            eta: vec![DVector::zeros(m); d.n_times()],
            phi: T::lit(fixed_phi.unwrap_or(0.0)),
            s2_eta: T::one(),
            s2_eta1: T::one(),
            omega: vec![T::zero(); n],
            cut_part: vec![T::zero(); n],
            x_part: vec![T::zero(); n],
            psi_part: vec![T::zero(); n],
        }
    }

    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.draw_omega(rng);
        match self.dynamics {
            Dynamics::Independent => self.draw_sigma2_independent(rng),
            Dynamics::Ar1 => {
                self.draw_phi(rng)?;
                self.draw_sigma2_ar1(rng);
            }
        }
        self.draw_beta(rng)?;
        self.draw_gamma(rng);
        for t in 1..=self.d.n_times() {
            self.draw_eta(t, rng)?;
        }
        Ok(())
    }

    fn draw_omega<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for i in 0..self.omega.len() {
            let c = self.cut_part[i] + self.x_part[i] + self.psi_part[i];
            self.omega[i] = T::lit(sample_pg(self.shapes[i], c.as_f64(), rng));
        }
    }

    fn draw_sigma2_independent<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let m = self.d.n_basis() as f64;
        let nt = self.eta.len() as f64;
        let ss: f64 = self.eta.iter().map(|e| e.norm_squared().as_f64()).sum();
        self.s2_eta = draw_inverse_gamma(self.a + 0.5 * m * nt, self.b + 0.5 * ss, rng);
    }

    fn draw_phi<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if let Some(phi) = self.fixed_phi {
            self.phi = T::lit(phi);
            return Ok(());
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for t in 1..self.eta.len() {
            num += self.eta[t].dot(&self.eta[t - 1]).as_f64();
            den += self.eta[t - 1].norm_squared().as_f64();
        }
        let phi = if den > 1e-300 {
            let sd = (self.s2_eta.as_f64() / den).sqrt();
            sample_truncated_normal(num / den, sd, -1.0, 1.0, rng)?
        } else {
            rng.random_range(-1.0..1.0)
        };
        self.phi = T::lit(phi);
        Ok(())
    }

    fn draw_sigma2_ar1<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let m = self.d.n_basis() as f64;
        let nt = self.eta.len() as f64;
        let e1 = self.eta[0].norm_squared().as_f64();
        self.s2_eta1 = draw_inverse_gamma(self.a + 0.5 * m, self.b + 0.5 * e1, rng);
        let mut ss = 0.0;
        for t in 1..self.eta.len() {
            let r = &self.eta[t] - &self.eta[t - 1] * self.phi;
            ss += r.norm_squared().as_f64();
        }
        self.s2_eta = draw_inverse_gamma(self.a + 0.5 * m * (nt - 1.0), self.b + 0.5 * ss, rng);
    }

    /// Precision and linear term of the `β` conditional.
    fn beta_system(&self) -> (DMatrix<T>, DVector<T>) {
        let q = self.beta.len();
        let mut p = DMatrix::identity(q, q) / self.sigma2_beta;
        let mut rhs = DVector::zeros(q);
        for i in 0..self.omega.len() {
            let x = self.xt.column(i);
            let w = self.omega[i];
            p.ger(w, &x, &x, T::one());
            rhs.axpy(
                self.kappa[i] - w * (self.cut_part[i] + self.psi_part[i]),
                &x,
                T::one(),
            );
        }
        (p, rhs)
    }

    fn draw_beta<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.beta.is_empty() {
            return Ok(());
        }
        let (p, rhs) = self.beta_system();
        let chol = cholesky(p, "beta")?;
        self.beta = draw_canonical(&chol, &rhs, rng).0;
        for i in 0..self.x_part.len() {
            self.x_part[i] = self.xt.column(i).dot(&self.beta);
        }
        Ok(())
    }

    /// Diagonal precision and linear term of the `γ` conditional.
    fn gamma_system(&self) -> (DVector<T>, DVector<T>) {
        let g = self.gamma.len();
        let mut p = DVector::from_element(g, T::one() / self.sigma2_gamma);
        let mut rhs = DVector::zeros(g);
        for (i, row) in self.d.rows().iter().enumerate() {
            if let Some(c) = row.cutpoint {
                let w = self.omega[i];
                p[c] += w;
                rhs[c] += self.kappa[i] - w * (self.x_part[i] + self.psi_part[i]);
            }
        }
        (p, rhs)
    }

    fn draw_gamma<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.gamma.is_empty() {
            return;
        }
        let (p, rhs) = self.gamma_system();
        for c in 0..self.gamma.len() {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            self.gamma[c] = rhs[c] / p[c] + T::lit(z) / p[c].sqrt();
        }
        for (i, row) in self.d.rows().iter().enumerate() {
            self.cut_part[i] = row.cutpoint.map_or(T::zero(), |c| self.gamma[c]);
        }
    }

    /// Precision and linear term of the `η_t` conditional (`t` 1-based).
    fn eta_system(&self, t: usize) -> (DMatrix<T>, DVector<T>) {
        let m = self.d.n_basis();
        let n_t = self.eta.len();
        let (prior, neighbours) = match self.dynamics {
            Dynamics::Independent => (T::one() / self.s2_eta, DVector::zeros(m)),
            Dynamics::Ar1 => {
                let phi = self.phi;
                let inv = T::one() / self.s2_eta;
                let mut nb = DVector::zeros(m);
                if t > 1 {
                    nb += &self.eta[t - 2];
                }
                if t < n_t {
                    nb += &self.eta[t];
                }
                nb *= phi * inv;
                let prior = if t == 1 {
                    T::one() / self.s2_eta1 + if n_t > 1 { phi * phi * inv } else { T::zero() }
                } else if t < n_t {
                    (T::one() + phi * phi) * inv
                } else {
                    inv
                };
                (prior, nb)
            }
        };
        let n_areas = self.area_psi.ncols();
        let mut w_area = vec![T::zero(); n_areas];
        let mut r_area = vec![T::zero(); n_areas];
        for &i in &self.d.rows_by_time()[t - 1] {
            let a = self.d.rows()[i].area - 1;
            let w = self.omega[i];
            w_area[a] += w;
            r_area[a] += self.kappa[i] - w * (self.cut_part[i] + self.x_part[i]);
        }
        let mut p = DMatrix::identity(m, m) * prior;
        let mut rhs = neighbours;
        for a in 0..n_areas {
            if w_area[a] == T::zero() && r_area[a] == T::zero() {
                continue;
            }
            let psi = self.area_psi.column(a);
            p.ger(w_area[a], &psi, &psi, T::one());
            rhs.axpy(r_area[a], &psi, T::one());
        }
        (p, rhs)
    }

    fn draw_eta<R: Rng + ?Sized>(&mut self, t: usize, rng: &mut R) -> Result<()> {
        if self.d.n_basis() == 0 {
            return Ok(());
        }
        let (p, rhs) = self.eta_system(t);
        let chol = cholesky(p, &format!("eta_{t}"))?;
        self.eta[t - 1] = draw_canonical(&chol, &rhs, rng).0;
        for &i in &self.d.rows_by_time()[t - 1] {
            let a = self.d.rows()[i].area - 1;
            self.psi_part[i] = self.area_psi.column(a).dot(&self.eta[t - 1]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pg::pg_mean;
    use crate::spatial::{moran_basis, AdjacencyGraph};
    use crate::survey::{build_design, DesignOptions, UnitRecord};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn records(n: usize, seed: u64, n_times: usize) -> Vec<UnitRecord<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| UnitRecord {
                unit_id: format!("{i}"),
                t: 1 + i % n_times,
                area: 1 + i % 9,
                x: vec![rng.random_range(-1.0..1.0), f64::from(rng.random::<bool>())],
                y: 1 + rng.random_range(0..4),
                w: rng.random_range(0.5..3.0),
                prev: None,
            })
            .collect()
    }

    fn small_cfg() -> FitConfig {
        FitConfig {
            n_draws: 30,
            burn_in: 10,
            seed: 9,
            ..FitConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let bad = FitConfig {
            a: 0.0,
            ..FitConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = FitConfig {
            n_draws: 0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            fixed_phi: Some(1.0),
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn conditional_systems_solve_the_normal_equations() {
        let basis = moran_basis(&AdjacencyGraph::grid(3, 3).unwrap(), None).unwrap();
        let rs = records(300, 1, 2);
        let opts = DesignOptions::new(4, TimeStructure::Longitudinal { n_times: 2 });
        let d = build_design(&rs, &basis, &opts).unwrap();
        let cfg = small_cfg();
        let mut chain = Chain::new(&d, &cfg, Dynamics::Ar1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            chain.sweep(&mut rng).unwrap();
        }
        // fix ω at its PG means at the current state
        for i in 0..d.n_rows() {
            let c = chain.cut_part[i] + chain.x_part[i] + chain.psi_part[i];
            chain.omega[i] = pg_mean(d.rows()[i].shape(), c).unwrap();
        }
        // dense oracle: C = [G, X, Ψ_f], offsets from the other blocks
        let n = d.n_rows();
        let g = d.n_cutpoints();
        let q = d.n_covariates();
        let m = d.n_basis();
        let kappa = DVector::from_iterator(n, d.rows().iter().map(|r| r.kappa));
        let omega = DVector::from_vec(chain.omega.clone());
        let gmat = DMatrix::from_fn(n, g, |i, j| d.u_vector(i)[j]);
        let xmat = d.x_rows().clone();
        let psi_f = DMatrix::from_fn(n, 2 * m, |i, j| {
            if (j / m) + 1 == d.rows()[i].time {
                d.psi_rows()[(i, j % m)]
            } else {
                0.0
            }
        });
        let eta_f = DVector::from_iterator(2 * m, chain.eta.iter().flat_map(|e| e.iter().copied()));
        let om = DMatrix::from_diagonal(&omega);

        let (p, rhs) = chain.beta_system();
        let mean = p.clone().cholesky().unwrap().solve(&rhs);
        let target = &kappa - &om * (&gmat * &chain.gamma + &psi_f * &eta_f);
        let lhs = (xmat.transpose() * &om * &xmat + DMatrix::identity(q, q) / cfg.sigma2_beta) * &mean;
        assert!((lhs - xmat.transpose() * &target).amax() < 1e-8);

        let (pg, rg) = chain.gamma_system();
        let gmean = rg.component_div(&pg);
        let target = &kappa - &om * (&xmat * &chain.beta + &psi_f * &eta_f);
        let lhs = (gmat.transpose() * &om * &gmat + DMatrix::identity(g, g) / cfg.sigma2_gamma) * &gmean;
        assert!((lhs - gmat.transpose() * &target).amax() < 1e-8);

        let (pe, re) = chain.eta_system(1);
        let emean = pe.clone().cholesky().unwrap().solve(&re);
        let psi1 = psi_f.columns(0, m).into_owned();
        let target = &kappa - &om * (&gmat * &chain.gamma + &xmat * &chain.beta);
        let prior = 1.0 / chain.s2_eta1 + chain.phi * chain.phi / chain.s2_eta;
        let lhs = (psi1.transpose() * &om * &psi1 + DMatrix::identity(m, m) * prior) * &emean;
        let rhs = psi1.transpose() * &target + &chain.eta[1] * (chain.phi / chain.s2_eta);
        assert!((lhs - rhs).amax() < 1e-8);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let basis = moran_basis(&AdjacencyGraph::grid(3, 3).unwrap(), None).unwrap();
        let rs = records(200, 2, 1);
        let opts = DesignOptions::new(4, TimeStructure::CrossSectional);
        let d = build_design(&rs, &basis, &opts).unwrap();
        let a = fit_ordinal_cs(&d, &small_cfg()).unwrap();
        let b = fit_ordinal_cs(&d, &small_cfg()).unwrap();
        assert_eq!(a, b);
        let c = fit_ordinal_cs(
            &d,
            &FitConfig {
                seed: 10,
                ..small_cfg()
            },
        )
        .unwrap();
        assert_ne!(a, c);
        assert_eq!(a.gamma.shape(), (30, 3));
        assert_eq!(a.eta.ncols(), basis.n_columns());
        assert!(a.phi.is_empty());
    }

    #[test]
    fn constant_weights_give_the_unweighted_chain() {
        let basis = moran_basis(&AdjacencyGraph::grid(3, 3).unwrap(), None).unwrap();
        let mut rs = records(150, 3, 1);
        let opts = DesignOptions::new(4, TimeStructure::CrossSectional);
        rs.iter_mut().for_each(|r| r.w = 1.0);
        let ones = fit_ordinal_cs(&build_design(&rs, &basis, &opts).unwrap(), &small_cfg()).unwrap();
        rs.iter_mut().for_each(|r| r.w = 2.0);
        let twos = fit_ordinal_cs(&build_design(&rs, &basis, &opts).unwrap(), &small_cfg()).unwrap();
        assert_eq!(ones, twos);
    }

    #[test]
    fn model_checks() {
        let basis = moran_basis(&AdjacencyGraph::grid(3, 3).unwrap(), None).unwrap();
        let rs = records(50, 4, 1);
        let cs = build_design(&rs, &basis, &DesignOptions::new(4, TimeStructure::CrossSectional)).unwrap();
        assert!(matches!(
            fit_ordinal_long(&cs, &small_cfg()),
            Err(Error::SingleTimePoint)
        ));
        let long1 = build_design(
            &rs,
            &basis,
            &DesignOptions::new(4, TimeStructure::Longitudinal { n_times: 1 }),
        )
        .unwrap();
        assert!(matches!(
            fit_ordinal_long(&long1, &small_cfg()),
            Err(Error::SingleTimePoint)
        ));
        let empty =
            build_design::<f64>(&[], &basis, &DesignOptions::new(4, TimeStructure::CrossSectional)).unwrap();
        assert!(matches!(
            fit_ordinal_cs(&empty, &small_cfg()),
            Err(Error::EmptyDesign)
        ));
    }

    #[test]
    fn fixed_phi_is_respected() {
        let basis = moran_basis(&AdjacencyGraph::grid(3, 3).unwrap(), None).unwrap();
        let mut rs = records(200, 5, 3);
        crate::survey::derive_prev(&mut rs).unwrap();
        let opts = DesignOptions::new(4, TimeStructure::Longitudinal { n_times: 3 });
        let d = build_design(&rs, &basis, &opts).unwrap();
        let cfg = FitConfig {
            fixed_phi: Some(0.0),
            ..small_cfg()
        };
        let draws = fit_ordinal_long(&d, &cfg).unwrap();
        assert!(draws.phi.iter().all(|&p| p == 0.0));
        let free = fit_ordinal_long(&d, &small_cfg()).unwrap();
        assert!(free.phi.iter().all(|&p| p > -1.0 && p < 1.0));
        assert!(free.sigma2_eta.iter().chain(&free.sigma2_eta1).all(|&s| s > 0.0));
        assert_eq!(free.eta.ncols(), 3 * basis.n_columns());
    }
}
