//! Simulation harness: synthetic rotating-panel populations, informative
//! PPS subsamples, the five estimators and their scores against the
//! population truth.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    direct_estimates, generate_and_aggregate, summarize_cells, CellEstimate, CellKey, DirectVariance,
    FittedModel, PopulationFrame,
};
use crate::gibbs::{fit_ordinal_cs, fit_ordinal_long, FitConfig, PosteriorDraws};
use crate::rng::{child_seed, stream_rng};
use crate::scalar::logistic;
use crate::spatial::{moran_basis, read_edge_list, AdjacencyGraph, BasisMatrix};
use crate::survey::{
    build_design, derive_prev, ingest_csv, CutpointLayout, DesignOptions, TimeStructure, UnitRecord,
};
use crate::vb::{draw_variational, fit_vb_ordinal_cs, fit_vb_ordinal_long};

/// Poisson PPS design with size `exp(coef_weight·w* + coef_response·ȳ*)`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpsDesign {
    pub expected_fraction: f64,
    pub coef_weight: f64,
    pub coef_response: f64,
}

impl Default for PpsDesign {
    fn default() -> Self {
        Self {
            expected_fraction: 0.05,
            coef_weight: 0.1,
            coef_response: 0.2,
        }
    }
}

impl PpsDesign {
    pub fn validate(&self) -> Result<()> {
        if !(self.expected_fraction > 0.0 && self.expected_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "expected_fraction {} outside (0, 1]",
                self.expected_fraction
            )));
        }
        if !self.coef_weight.is_finite() || !self.coef_response.is_finite() {
            return Err(Error::Config("design coefficients must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpsSample {
    pub indices: Vec<usize>,
    /// `1 / π` of each sampled unit.
    pub weights: Vec<f64>,
    /// Inclusion probabilities of the whole population.
    pub probabilities: Vec<f64>,
    /// The population weights were constant, so `w*` was set to 0.
    pub constant_weights: bool,
}

fn standardize(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    (sd > 1e-12 * mean.abs().max(1.0)).then(|| v.iter().map(|x| (x - mean) / sd).collect())
}

/// Unnormalised size variable of every unit; `.1` is whether the weights
/// were constant.
pub fn size_variable(ybar: &[f64], w: &[f64], design: &PpsDesign) -> Result<(Vec<f64>, bool)> {
    design.validate()?;
    if ybar.is_empty() || ybar.len() != w.len() {
        return Err(Error::Dimension(format!(
            "{} responses and {} weights",
            ybar.len(),
            w.len()
        )));
    }
    if let Some(i) = w.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::data(i + 1, "population weights must be positive"));
    }
    let log_w: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    let (w_star, constant) = match standardize(&log_w) {
        Some(s) => (s, false),
        None => (vec![0.0; w.len()], true),
    };
    let y_star = standardize(ybar).unwrap_or_else(|| vec![0.0; ybar.len()]);
    let size = w_star
        .iter()
        .zip(&y_star)
        .map(|(a, b)| (design.coef_weight * a + design.coef_response * b).exp())
        .collect();
    Ok((size, constant))
}

/// Inclusion probabilities scaled to `expected_fraction · N`, capped at 1.
pub fn inclusion_probabilities(ybar: &[f64], w: &[f64], design: &PpsDesign) -> Result<(Vec<f64>, bool)> {
    let (size, constant) = size_variable(ybar, w, design)?;
    let total: f64 = size.iter().sum();
    let target = design.expected_fraction * size.len() as f64;
    Ok((
        size.iter().map(|s| (s * target / total).min(1.0)).collect(),
        constant,
    ))
}

/// Independent Bernoulli(πᵢ) inclusion.
pub fn pps_poisson_sample<R: Rng + ?Sized>(
    ybar: &[f64],
    w: &[f64],
    design: &PpsDesign,
    rng: &mut R,
) -> Result<PpsSample> {
    let (probabilities, constant_weights) = inclusion_probabilities(ybar, w, design)?;
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    for (i, &p) in probabilities.iter().enumerate() {
        if rng.random::<f64>() < p {
            indices.push(i);
            weights.push(1.0 / p);
        }
    }
    Ok(PpsSample {
        indices,
        weights,
        probabilities,
        constant_weights,
    })
}

/// Interval score of `[lower, upper]` for the value `x` at level `alpha`.
pub fn interval_score(lower: f64, upper: f64, x: f64, alpha: f64) -> Result<f64> {
    if lower > upper {
        return Err(Error::Domain(format!("lower {lower} exceeds upper {upper}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    let mut s = upper - lower;
    if x < lower {
        s += 2.0 / alpha * (lower - x);
    }
    if x > upper {
        s += 2.0 / alpha * (x - upper);
    }
    Ok(s)
}

/// Generating model of a synthetic population.
///
/// The single categorical covariate has `covariate_probs.len()` levels
/// coded as indicators with the first level as reference. Cutpoints are
/// `gamma[k]`, shifted by `persistence` towards the previous response:
/// up for `k = prev`, down for `k < prev`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    pub n_households: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Edge-list file used instead of the grid.
    pub adjacency: Option<PathBuf>,
    pub n_basis: Option<usize>,
    pub n_times: usize,
    pub n_categories: usize,
    pub max_weeks: usize,
    pub covariate_probs: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub persistence: f64,
    pub phi: f64,
    pub sigma2_eta: f64,
    pub sigma2_eta1: f64,
    /// Sd of the log household weights.
    pub log_weight_sd: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            n_households: 20_000,
            grid_rows: 5,
            grid_cols: 5,
            adjacency: None,
            n_basis: Some(10),
            n_times: 4,
            n_categories: 4,
            max_weeks: 3,
            covariate_probs: vec![0.5, 0.3, 0.2],
            beta: vec![0.5, -0.5],
            gamma: vec![-0.4, 0.0, 0.4],
            persistence: 1.5,
            phi: 0.8,
            sigma2_eta: 0.1,
            sigma2_eta1: 0.5,
            log_weight_sd: 0.5,
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_households == 0 {
            return bad("n_households must be positive".into());
        }
        if self.n_categories < 3 {
            return bad(format!(
                "ordinal populations need K >= 3, got {}",
                self.n_categories
            ));
        }
        if self.n_times == 0 || self.max_weeks == 0 {
            return bad("n_times and max_weeks must be positive".into());
        }
        if self.covariate_probs.is_empty() || self.covariate_probs.iter().any(|&p| !(p >= 0.0)) {
            return bad("covariate_probs must be nonnegative and nonempty".into());
        }
        if self.beta.len() + 1 != self.covariate_probs.len() {
            return bad(format!(
                "{} covariate levels need {} coefficients, got {}",
                self.covariate_probs.len(),
                self.covariate_probs.len() - 1,
                self.beta.len()
            ));
        }
        if self.gamma.len() + 1 != self.n_categories {
            return bad(format!("gamma needs {} entries", self.n_categories - 1));
        }
        if !(self.phi > -1.0 && self.phi < 1.0) {
            return bad(format!("phi {} outside (-1, 1)", self.phi));
        }
        if !(self.sigma2_eta > 0.0 && self.sigma2_eta1 > 0.0 && self.log_weight_sd >= 0.0) {
            return bad("variances must be positive".into());
        }
        if self.adjacency.is_none() && self.grid_rows * self.grid_cols == 0 {
            return bad("grid must have at least one area".into());
        }
        Ok(())
    }

    pub fn graph(&self) -> Result<AdjacencyGraph> {
        match &self.adjacency {
            Some(path) => read_edge_list(path, None),
            None => AdjacencyGraph::grid(self.grid_rows, self.grid_cols),
        }
    }

    /// Cutpoint `k` for a unit whose previous response was `prev`.
    pub fn cutpoint(&self, k: usize, prev: Option<usize>) -> f64 {
        let shift = match prev {
            Some(p) if k == p => self.persistence,
            Some(p) if k < p => -self.persistence,
            _ => 0.0,
        };
        self.gamma[k - 1] + shift
    }

    /// True cutpoints in the longitudinal layout.
    pub fn true_gamma(&self) -> Result<Vec<f64>> {
        let layout = CutpointLayout::new(self.n_categories, self.n_times)?;
        (1..=layout.count())
            .map(|i| layout.slot(i).map(|(_, prev, k)| self.cutpoint(k, prev)))
            .collect()
    }
}

/// Parameters that generated a synthetic population.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParameters {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub phi: f64,
    pub sigma2_eta: f64,
    pub sigma2_eta1: f64,
    pub eta: Vec<DVector<f64>>,
}

/// A finite population treated as ground truth.
#[derive(Debug, Clone)]
pub struct Population {
    /// Every response, grouped by household and ordered by week.
    pub records: Vec<UnitRecord<f64>>,
    /// Record range of each household.
    pub households: Vec<std::ops::Range<usize>>,
    pub basis: BasisMatrix<f64>,
    pub n_categories: usize,
    pub n_times: usize,
    pub frame: PopulationFrame<f64>,
    /// Category proportions of every `(area, t)` cell.
    pub truth: BTreeMap<(usize, usize), Vec<f64>>,
    pub parameters: Option<TrueParameters>,
}

impl Population {
    /// Builds a population from microdata; `w` holds the household weight
    /// used by the PPS size variable.
    pub fn from_records(
        mut records: Vec<UnitRecord<f64>>,
        basis: BasisMatrix<f64>,
        n_categories: usize,
        n_times: usize,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Domain("empty population".into()));
        }
        records.sort_by(|a, b| (&a.unit_id, a.t).cmp(&(&b.unit_id, b.t)));
        derive_prev(&mut records)?;
        let mut households = Vec::new();
        let mut start = 0;
        for i in 1..=records.len() {
            if i == records.len() || records[i].unit_id != records[start].unit_id {
                households.push(start..i);
                start = i;
            }
        }
        let mut counts: BTreeMap<(usize, usize), Vec<u64>> = BTreeMap::new();
        for r in &records {
            if r.y == 0 || r.y > n_categories || r.t == 0 || r.t > n_times {
                return Err(Error::data(
                    None,
                    format!("record of unit {} out of range", r.unit_id),
                ));
            }
            counts
                .entry((r.area, r.t))
                .or_insert_with(|| vec![0; n_categories])[r.y - 1] += 1;
        }
        let truth = counts
            .into_iter()
            .map(|(key, c)| {
                let n: u64 = c.iter().sum();
                (key, c.iter().map(|&v| v as f64 / n as f64).collect())
            })
            .collect();
        let frame = PopulationFrame::from_records(&records, n_categories)?;
        Ok(Self {
            records,
            households,
            basis,
            n_categories,
            n_times,
            frame,
            truth,
            parameters: None,
        })
    }

    pub fn n_households(&self) -> usize {
        self.households.len()
    }

    /// Mean response of each household.
    pub fn household_means(&self) -> Vec<f64> {
        self.households
            .iter()
            .map(|r| self.records[r.clone()].iter().map(|u| u.y as f64).sum::<f64>() / r.len() as f64)
            .collect()
    }

    pub fn household_weights(&self) -> Vec<f64> {
        self.households.iter().map(|r| self.records[r.start].w).collect()
    }

    /// Responses of the sampled households, weighted by `1 / π`.
    pub fn sample_records(&self, sample: &PpsSample) -> Vec<UnitRecord<f64>> {
        let mut out = Vec::new();
        for (&h, &w) in sample.indices.iter().zip(&sample.weights) {
            out.extend(
                self.records[self.households[h].clone()]
                    .iter()
                    .map(|r| UnitRecord { w, ..r.clone() }),
            );
        }
        out
    }
}

fn categorical_response<R: Rng + ?Sized>(pi_tilde: impl Iterator<Item = f64>, rng: &mut R) -> usize {
    let mut k = 1;
    for p in pi_tilde {
        if rng.random::<f64>() < p {
            return k;
        }
        k += 1;
    }
    k
}

/// Draws a rotating-panel population from the longitudinal ordinal model.
pub fn synth_population<R: Rng + ?Sized>(spec: &PopulationSpec, rng: &mut R) -> Result<Population> {
    spec.validate()?;
    let graph = spec.graph()?;
    let basis: BasisMatrix<f64> = moran_basis(&graph, spec.n_basis)?;
    let m = basis.n_columns();
    let n_areas = graph.n_areas();
    let kk = spec.n_categories;
    let tt = spec.n_times;

    let mut eta = Vec::with_capacity(tt);
    let sd1 = spec.sigma2_eta1.sqrt();
    let sd = spec.sigma2_eta.sqrt();
    eta.push(DVector::from_fn(m, |_, _| {
        sd1 * rng.sample::<f64, _>(StandardNormal)
    }));
    for t in 1..tt {
        let prev = eta[t - 1].clone();
        eta.push(prev * spec.phi + DVector::from_fn(m, |_, _| sd * rng.sample::<f64, _>(StandardNormal)));
    }
    let area_effects: Vec<Vec<f64>> = (1..=n_areas)
        .map(|a| {
            let psi = basis.row(a)?;
            Ok(eta
                .iter()
                .map(|e| psi.iter().zip(e.iter()).map(|(p, v)| p * v).sum())
                .collect())
        })
        .collect::<Result<_>>()?;

    let levels = WeightedIndex::new(&spec.covariate_probs)
        .map_err(|e| Error::Config(format!("covariate_probs: {e}")))?;
    let log_w = Normal::new(0.0, spec.log_weight_sd).map_err(|e| Error::Config(e.to_string()))?;
    let width = (spec.n_households - 1).to_string().len();
    let mut records = Vec::new();
    for h in 0..spec.n_households {
        let area = rng.random_range(1..=n_areas);
        let level = levels.sample(rng);
        let x: Vec<f64> = (1..spec.covariate_probs.len())
            .map(|j| if j == level { 1.0 } else { 0.0 })
            .collect();
        let xb: f64 = x.iter().zip(&spec.beta).map(|(a, b)| a * b).sum();
        let w = log_w.sample(rng).exp();
        let weeks = rng.random_range(1..=spec.max_weeks.min(tt));
        let start = rng.random_range(1..=tt - weeks + 1);
        let mut prev = None;
        for t in start..start + weeks {
            let effect = area_effects[area - 1][t - 1];
            let y = categorical_response(
                (1..kk).map(|k| logistic(spec.cutpoint(k, prev) - xb - effect)),
                rng,
            );
            records.push(UnitRecord {
                unit_id: format!("h{h:0width$}"),
                t,
                area,
                x: x.clone(),
                y,
                w,
                prev,
            });
            prev = Some(y);
        }
    }
    let mut pop = Population::from_records(records, basis, kk, tt)?;
    pop.parameters = Some(TrueParameters {
        beta: spec.beta.clone(),
        gamma: spec.true_gamma()?,
        phi: spec.phi,
        sigma2_eta: spec.sigma2_eta,
        sigma2_eta1: spec.sigma2_eta1,
        eta,
    });
    Ok(pop)
}

/// The five competing estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize, Serialize)]
#[serde(try_from = "String", into = "String")]
pub enum EstimatorKind {
    Direct,
    VbCs,
    VbLon,
    GibbsCs,
    GibbsLon,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Direct,
        EstimatorKind::VbCs,
        EstimatorKind::VbLon,
        EstimatorKind::GibbsCs,
        EstimatorKind::GibbsLon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::VbCs => "vb-cs",
            Self::VbLon => "vb-lon",
            Self::GibbsCs => "gibbs-cs",
            Self::GibbsLon => "gibbs-lon",
        }
    }

    pub fn is_model(self) -> bool {
        self != Self::Direct
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown estimator `{s}`")))
    }
}

impl TryFrom<String> for EstimatorKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<EstimatorKind> for String {
    fn from(e: EstimatorKind) -> Self {
        e.name().to_string()
    }
}

/// Microdata file standing in for the population.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MicrodataSource {
    pub path: PathBuf,
    pub adjacency: PathBuf,
    pub n_areas: Option<usize>,
    pub n_basis: Option<usize>,
    pub n_categories: usize,
}

/// A simulation scenario, usually read from a TOML file.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_reps: usize,
    pub seed: u64,
    pub alpha: f64,
    pub estimators: Vec<EstimatorKind>,
    pub direct_variance: DirectVarianceName,
    pub population: PopulationSpec,
    pub microdata: Option<MicrodataSource>,
    pub design: PpsDesign,
    pub fit: FitConfig,
}

/// Serialised name of a [`DirectVariance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectVarianceName {
    #[default]
    WithReplacement,
    Poisson,
}

impl From<DirectVarianceName> for DirectVariance {
    fn from(v: DirectVarianceName) -> Self {
        match v {
            DirectVarianceName::WithReplacement => DirectVariance::WithReplacement,
            DirectVarianceName::Poisson => DirectVariance::Poisson,
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_reps: 20,
            seed: 1,
            alpha: 0.05,
            estimators: EstimatorKind::ALL.to_vec(),
            direct_variance: DirectVarianceName::default(),
            population: PopulationSpec::default(),
            microdata: None,
            design: PpsDesign::default(),
            fit: FitConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::Config("n_reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators selected".into()));
        }
        self.design.validate()?;
        self.fit.validate()?;
        if self.microdata.is_none() {
            self.population.validate()?;
        }
        Ok(())
    }

    /// The ground-truth population of the scenario.
    pub fn population(&self, seed: u64) -> Result<Population> {
        match &self.microdata {
            None => synth_population(&self.population, &mut stream_rng(seed, 0)),
            Some(src) => {
                let graph = read_edge_list(&src.adjacency, src.n_areas)?;
                let basis = moran_basis(&graph, src.n_basis)?;
                let records: Vec<UnitRecord<f64>> = ingest_csv(&src.path, src.n_categories)?;
                let n_times = records.iter().map(|r| r.t).max().unwrap_or(0);
                Population::from_records(records, basis, src.n_categories, n_times)
            }
        }
    }
}

/// Scores of one estimator in one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct RepScore {
    pub estimates: Vec<CellEstimate<f64>>,
    pub seconds: f64,
}

/// Runs one estimator on a sample and returns its cell estimates.
pub fn run_estimator(
    kind: EstimatorKind,
    population: &Population,
    sample: &[UnitRecord<f64>],
    fit: &FitConfig,
    alpha: f64,
    variance: DirectVariance,
) -> Result<Vec<CellEstimate<f64>>> {
    let kk = population.n_categories;
    let tt = population.n_times;
    let basis = &population.basis;
    let frame = &population.frame;
    let model_estimates = |model: FittedModel<f64>, frame: &PopulationFrame<f64>, seed: u64| {
        let draws = generate_and_aggregate(&model, frame, basis, seed)?;
        summarize_cells(&draws, alpha)
    };
    let predict_seed = child_seed(fit.seed, 7);
    match kind {
        EstimatorKind::Direct => direct_estimates(sample, &frame.cell_sizes(), kk, alpha, variance),
        EstimatorKind::GibbsLon | EstimatorKind::VbLon => {
            let opts = DesignOptions::new(kk, TimeStructure::Longitudinal { n_times: tt });
            let design = build_design(sample, basis, &opts)?;
            let draws = if kind == EstimatorKind::GibbsLon {
                fit_ordinal_long(&design, fit)?
            } else {
                let (state, _) = fit_vb_ordinal_long(&design, fit)?;
                draw_variational(&state, fit.n_draws, &mut stream_rng(fit.seed, 0))?
            };
            model_estimates(FittedModel::Ordinal(draws), frame, predict_seed)
        }
        EstimatorKind::GibbsCs | EstimatorKind::VbCs => {
            let mut out = Vec::new();
            for t in 1..=tt {
                let week: Vec<_> = sample.iter().filter(|r| r.t == t).cloned().collect();
                let week_frame = frame.restrict_to_time(t);
                if week_frame.is_empty() {
                    continue;
                }
                let opts = DesignOptions::new(kk, TimeStructure::CrossSectional);
                let design = build_design(&week, basis, &opts)?;
                let cfg = FitConfig {
                    seed: child_seed(fit.seed, t as u64),
                    ..fit.clone()
                };
                let draws: PosteriorDraws<f64> = if kind == EstimatorKind::GibbsCs {
                    fit_ordinal_cs(&design, &cfg)?
                } else {
                    let (state, _) = fit_vb_ordinal_cs(&design, &cfg)?;
                    draw_variational(&state, cfg.n_draws, &mut stream_rng(cfg.seed, 0))?
                };
                let mut est = model_estimates(
                    FittedModel::Ordinal(draws),
                    &week_frame,
                    child_seed(predict_seed, t as u64),
                )?;
                for e in &mut est {
                    e.key.t = t;
                }
                out.extend(est);
            }
            Ok(out)
        }
    }
}

/// Averaged metrics of one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub estimator: EstimatorKind,
    pub mse: f64,
    pub abs_bias: f64,
    pub coverage: f64,
    pub interval_score: f64,
    /// Median wall-clock seconds per replicate fit.
    pub runtime: f64,
    pub n_success: usize,
    pub n_failed: usize,
    /// Cell scores skipped because the estimate was missing.
    pub n_missing: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct CellAccumulator {
    n: usize,
    err: f64,
    err2: f64,
    covered: usize,
    score: f64,
}

impl CellAccumulator {
    fn mse(&self) -> f64 {
        self.err2 / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub metrics: Vec<SimMetrics>,
    /// `(estimator, t, MSE)` averaged over areas and categories.
    pub per_week: Vec<(EstimatorKind, usize, f64)>,
    /// Per-cell MSE of each model estimator over Direct's.
    pub cell_ratios: Vec<(EstimatorKind, CellKey, f64)>,
    /// Replicate, estimator and message of every failed fit.
    pub failures: Vec<(usize, EstimatorKind, String)>,
}

/// Runs `n_reps` replicates of the scenario from `seed`.
pub fn run_simulation(config: &ScenarioConfig, n_reps: usize, seed: u64) -> Result<SimulationOutput> {
    let config = ScenarioConfig {
        n_reps,
        seed,
        ..config.clone()
    };
    config.validate()?;
    let population = config.population(child_seed(seed, 0))?;
    let mut kinds = config.estimators.clone();
    kinds.sort();
    kinds.dedup();
    let ybar = population.household_means();
    let w = population.household_weights();

    let reps: Vec<Vec<(EstimatorKind, Result<RepScore>)>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = child_seed(seed, 1 + rep as u64);
            let sample = match pps_poisson_sample(&ybar, &w, &config.design, &mut stream_rng(rep_seed, 0)) {
                Ok(s) => population.sample_records(&s),
                Err(e) => return kinds.iter().map(|&k| (k, Err(e.clone_message()))).collect(),
            };
            kinds
                .par_iter()
                .map(|&kind| {
                    let fit = FitConfig {
                        seed: child_seed(rep_seed, 1 + kind as u64),
                        ..config.fit.clone()
                    };
                    let start = Instant::now();
                    let res = run_estimator(
                        kind,
                        &population,
                        &sample,
                        &fit,
                        config.alpha,
                        config.direct_variance.into(),
                    )
                    .map(|estimates| RepScore {
                        estimates,
                        seconds: start.elapsed().as_secs_f64(),
                    });
                    (kind, res)
                })
                .collect()
        })
        .collect();

    let mut cells: BTreeMap<EstimatorKind, BTreeMap<CellKey, CellAccumulator>> = BTreeMap::new();
    let mut times: BTreeMap<EstimatorKind, Vec<f64>> = BTreeMap::new();
    let mut failures = Vec::new();
    let mut missing: BTreeMap<EstimatorKind, usize> = BTreeMap::new();
    let truth_keys: Vec<CellKey> = population
        .truth
        .keys()
        .flat_map(|&(area, t)| {
            (1..=population.n_categories).map(move |category| CellKey {
                area,
                t,
                category,
                profile: None,
            })
        })
        .collect();
    for (rep, scores) in reps.into_iter().enumerate() {
        for (kind, res) in scores {
            let score = match res {
                Ok(s) => s,
                Err(e) => {
                    failures.push((rep, kind, e.to_string()));
                    continue;
                }
            };
            times.entry(kind).or_default().push(score.seconds);
            let by_key: BTreeMap<CellKey, &CellEstimate<f64>> =
                score.estimates.iter().map(|e| (e.key, e)).collect();
            let acc = cells.entry(kind).or_default();
            for key in &truth_keys {
                let Some(est) = by_key.get(key) else {
                    *missing.entry(kind).or_default() += 1;
                    continue;
                };
                let truth = population.truth[&(key.area, key.t)][key.category - 1];
                let err = est.point - truth;
                let a = acc.entry(*key).or_default();
                a.n += 1;
                a.err += err;
                a.err2 += err * err;
                a.covered += usize::from(est.lower <= truth && truth <= est.upper);
                a.score += interval_score(est.lower, est.upper, truth, config.alpha)?;
            }
        }
    }

    let mut metrics = Vec::new();
    let mut per_week = Vec::new();
    let mut cell_ratios = Vec::new();
    let direct = cells.get(&EstimatorKind::Direct).cloned();
    for &kind in &kinds {
        let n_failed = failures.iter().filter(|f| f.1 == kind).count();
        let empty = BTreeMap::new();
        let acc = cells.get(&kind).unwrap_or(&empty);
        let n_cells = acc.len() as f64;
        let mean = |f: &dyn Fn(&CellAccumulator) -> f64| acc.values().map(f).sum::<f64>() / n_cells;
        let mut t_sorted = times.get(&kind).cloned().unwrap_or_default();
        t_sorted.sort_by(f64::total_cmp);
        let runtime = match t_sorted.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => t_sorted[n / 2],
            n => 0.5 * (t_sorted[n / 2 - 1] + t_sorted[n / 2]),
        };
        metrics.push(SimMetrics {
            estimator: kind,
            mse: mean(&|a| a.mse()),
            abs_bias: mean(&|a| (a.err / a.n as f64).abs()),
            coverage: mean(&|a| a.covered as f64 / a.n as f64),
            interval_score: mean(&|a| a.score / a.n as f64),
            runtime,
            n_success: n_reps - n_failed,
            n_failed,
            n_missing: missing.get(&kind).copied().unwrap_or(0),
        });
        for t in 1..=population.n_times {
            let week: Vec<f64> = acc
                .iter()
                .filter(|(k, _)| k.t == t)
                .map(|(_, a)| a.mse())
                .collect();
            if !week.is_empty() {
                per_week.push((kind, t, week.iter().sum::<f64>() / week.len() as f64));
            }
        }
        if let (true, Some(direct)) = (kind.is_model(), &direct) {
            for (key, a) in acc {
                if let Some(d) = direct.get(key).filter(|d| d.mse() > 0.0) {
                    cell_ratios.push((kind, *key, a.mse() / d.mse()));
                }
            }
        }
    }
    Ok(SimulationOutput {
        metrics,
        per_week,
        cell_ratios,
        failures,
    })
}

impl Error {
    fn clone_message(&self) -> Error {
        Error::Domain(self.to_string())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::csv("simulation output", e)
}

/// One row of metrics per estimator; the runtime column only when `timings` is set.
pub fn write_metrics_csv<W: Write>(writer: W, metrics: &[SimMetrics], timings: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["method", "mse", "abs_bias", "coverage", "interval_score"];
    if timings {
        header.push("runtime_s");
    }
    header.extend(["n_success", "n_failed", "n_missing"]);
    w.write_record(&header).map_err(csv_err)?;
    for m in metrics {
        let mut row = vec![
            m.estimator.to_string(),
            format!("{:.6e}", m.mse),
            format!("{:.6e}", m.abs_bias),
            format!("{:.4}", m.coverage),
            format!("{:.6}", m.interval_score),
        ];
        if timings {
            row.push(format!("{:.3}", m.runtime));
        }
        row.extend([
            m.n_success.to_string(),
            m.n_failed.to_string(),
            m.n_missing.to_string(),
        ]);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("simulation output", e))
}

pub fn write_per_week_csv<W: Write>(writer: W, rows: &[(EstimatorKind, usize, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "t", "mse"]).map_err(csv_err)?;
    for (kind, t, mse) in rows {
        w.write_record([kind.to_string(), t.to_string(), format!("{mse:.6e}")])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("simulation output", e))
}

pub fn write_cell_ratio_csv<W: Write>(writer: W, rows: &[(EstimatorKind, CellKey, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["method", "area", "t", "category", "mse_ratio"])
        .map_err(csv_err)?;
    for (kind, key, ratio) in rows {
        w.write_record([
            kind.to_string(),
            key.area.to_string(),
            key.t.to_string(),
            key.category.to_string(),
            format!("{ratio:.6}"),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("simulation output", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interval_score_examples() {
        assert!((interval_score(0.2, 0.6, 0.4, 0.05).unwrap() - 0.4).abs() < 1e-12);
        assert!((interval_score(0.2, 0.6, 0.7, 0.05).unwrap() - 4.4).abs() < 1e-12);
        assert!((interval_score(0.2, 0.6, 0.2, 0.05).unwrap() - 0.4).abs() < 1e-12);
        assert!(interval_score(0.6, 0.2, 0.4, 0.05).is_err());
    }

    #[test]
    fn symmetric_population_gets_the_expected_fraction() {
        let design = PpsDesign::default();
        let (pi, constant) = inclusion_probabilities(&[2.0; 50], &[3.0; 50], &design).unwrap();
        assert!(constant);
        assert!(pi.iter().all(|&p| (p - 0.05).abs() < 1e-12));
    }

    #[test]
    fn realised_sample_size_is_near_its_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20_000;
        let ybar: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..4.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..5.0)).collect();
        let s = pps_poisson_sample(&ybar, &w, &PpsDesign::default(), &mut rng).unwrap();
        let sd = s.probabilities.iter().map(|p| p * (1.0 - p)).sum::<f64>().sqrt();
        assert!((s.indices.len() as f64 - 1000.0).abs() < 4.0 * sd);
        assert!(s
            .weights
            .iter()
            .zip(&s.indices)
            .all(|(w, &i)| (w * s.probabilities[i] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn response_coefficient_moves_sizes_and_probabilities() {
        let ybar = [1.0, 2.0, 3.0, 4.0];
        let w = [1.0, 2.0, 1.5, 1.2];
        let base = PpsDesign::default();
        let double = PpsDesign {
            coef_response: 0.4,
            ..base
        };
        let (s1, _) = size_variable(&ybar, &w, &base).unwrap();
        let (s2, _) = size_variable(&ybar, &w, &double).unwrap();
        assert!(s2[2] > s1[2] && s2[3] > s1[3]);
        let (p1, _) = inclusion_probabilities(&ybar, &w, &base).unwrap();
        let (p2, _) = inclusion_probabilities(&ybar, &w, &double).unwrap();
        assert!(p2[0] < p1[0] && p2[1] < p1[1]);
    }

    fn small_spec() -> PopulationSpec {
        PopulationSpec {
            n_households: 3000,
            grid_rows: 3,
            grid_cols: 3,
            n_basis: Some(4),
            n_times: 3,
            ..PopulationSpec::default()
        }
    }

    #[test]
    fn panel_weeks_are_consecutive_and_short() {
        let pop = synth_population(&small_spec(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(pop.n_households(), 3000);
        for h in &pop.households {
            let rs = &pop.records[h.clone()];
            assert!(!rs.is_empty() && rs.len() <= 3);
            for pair in rs.windows(2) {
                assert_eq!(pair[1].t, pair[0].t + 1);
                assert_eq!(pair[1].prev, Some(pair[0].y));
            }
            assert_eq!(rs[0].prev, None);
        }
        for p in pop.truth.values() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn null_model_gives_halving_frequencies() {
        let spec = PopulationSpec {
            beta: vec![0.0, 0.0],
            gamma: vec![0.0; 3],
            persistence: 0.0,
            sigma2_eta: 1e-12,
            sigma2_eta1: 1e-12,
            ..small_spec()
        };
        let pop = synth_population(&spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let n = pop.records.len() as f64;
        let mut freq = [0.0; 4];
        for r in &pop.records {
            freq[r.y - 1] += 1.0 / n;
        }
        for (f, e) in freq.iter().zip([0.5, 0.25, 0.125, 0.125]) {
            assert!((f - e).abs() < 4.0 * (e * (1.0 - e) / n).sqrt(), "{freq:?}");
        }
    }

    #[test]
    fn independent_effects_are_uncorrelated_over_time() {
        let spec = PopulationSpec {
            phi: 0.0,
            sigma2_eta: 1.0,
            sigma2_eta1: 1.0,
            n_times: 200,
            n_households: 10,
            grid_rows: 4,
            grid_cols: 4,
            n_basis: Some(5),
            ..small_spec()
        };
        let pop = synth_population(&spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let eta = &pop.parameters.unwrap().eta;
        assert_eq!(eta[0].len(), 5);
        let mut r_sum = 0.0;
        for j in 0..5 {
            let s: Vec<f64> = eta.iter().map(|e| e[j]).collect();
            let mean = s.iter().sum::<f64>() / s.len() as f64;
            let var: f64 = s.iter().map(|v| (v - mean).powi(2)).sum();
            let cov: f64 = s.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
            r_sum += cov / var;
        }
        assert!((r_sum / 5.0).abs() < 0.1);
    }

    #[test]
    fn true_cutpoints_follow_the_layout() {
        let spec = small_spec();
        let g = spec.true_gamma().unwrap();
        let layout = CutpointLayout::new(4, 3).unwrap();
        assert_eq!(g.len(), layout.count());
        let i = layout.index(2, Some(2), 2).unwrap();
        assert_eq!(g[i - 1], spec.gamma[1] + spec.persistence);
        let i = layout.index(3, Some(3), 1).unwrap();
        assert_eq!(g[i - 1], spec.gamma[0] - spec.persistence);
        let i = layout.index(1, None, 3).unwrap();
        assert_eq!(g[i - 1], spec.gamma[2]);
    }

    #[test]
    fn population_spec_validation() {
        let bad = PopulationSpec {
            beta: vec![1.0],
            ..PopulationSpec::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = PopulationSpec {
            phi: 1.0,
            ..PopulationSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn scenario_toml_parses_and_validates() {
        let cfg = ScenarioConfig::from_toml(
            r#"
            n_reps = 2
            estimators = ["direct", "vb-lon"]
            direct_variance = "poisson"
            [population]
            n_households = 100
            [fit]
            n_draws = 50
            "#,
        )
        .unwrap();
        assert_eq!(cfg.estimators, vec![EstimatorKind::Direct, EstimatorKind::VbLon]);
        assert_eq!(cfg.fit.n_draws, 50);
        assert_eq!(cfg.fit.burn_in, 500);
        assert!(cfg.validate().is_ok());
        assert!(ScenarioConfig::from_toml("estimators = [\"nope\"]").is_err());
        let zero = ScenarioConfig { n_reps: 0, ..cfg };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn metrics_csv_hides_runtime_unless_asked() {
        let m = SimMetrics {
            estimator: EstimatorKind::Direct,
            mse: 0.1,
            abs_bias: 0.01,
            coverage: 0.95,
            interval_score: 0.25,
            runtime: 1.5,
            n_success: 2,
            n_failed: 0,
            n_missing: 0,
        };
        let mut a = Vec::new();
        write_metrics_csv(&mut a, std::slice::from_ref(&m), false).unwrap();
        assert!(!String::from_utf8(a).unwrap().contains("runtime"));
        let mut b = Vec::new();
        write_metrics_csv(&mut b, &[m], true).unwrap();
        assert!(String::from_utf8(b).unwrap().contains("runtime_s"));
    }
}
