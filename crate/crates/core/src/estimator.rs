//! Cell estimates: post-stratified model predictions and Horvitz-Thompson
//! direct estimates.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::gibbs::PosteriorDraws;
use crate::rng::stream_rng;
use crate::scalar::{logistic, Real};
use crate::spatial::BasisMatrix;
use crate::survey::{NominalCovariates, UnitRecord};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// One post-stratification cell of the population.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCell<T> {
    pub area: usize,
    pub t: usize,
    pub x: Vec<T>,
    pub prev: Option<usize>,
    pub count: u64,
}

/// Population counts by `(area, t, covariate profile, previous response)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationFrame<T> {
    cells: Vec<FrameCell<T>>,
    n_categories: usize,
}

impl<T: Real> PopulationFrame<T> {
    pub fn new(cells: Vec<FrameCell<T>>, n_categories: usize) -> Result<Self> {
        if n_categories < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 categories, got {n_categories}"
            )));
        }
        if let Some(first) = cells.first() {
            let q = first.x.len();
            for (i, c) in cells.iter().enumerate() {
                if c.x.len() != q {
                    return Err(Error::data(
                        i + 1,
                        format!("{} covariates, expected {q}", c.x.len()),
                    ));
                }
                if c.area == 0 || c.t == 0 {
                    return Err(Error::data(i + 1, "area and t are 1-based"));
                }
                if matches!(c.prev, Some(p) if p == 0 || p > n_categories) {
                    return Err(Error::data(i + 1, "previous response out of range"));
                }
            }
        }
        Ok(Self { cells, n_categories })
    }

    /// Counts every record as one population member.
    pub fn from_records(records: &[UnitRecord<T>], n_categories: usize) -> Result<Self> {
        let mut groups: BTreeMap<(usize, usize, Option<usize>, Vec<u64>), (Vec<T>, u64)> = BTreeMap::new();
        for r in records {
            let bits = r.x.iter().map(|v| v.as_f64().to_bits()).collect();
            groups
                .entry((r.area, r.t, r.prev, bits))
                .or_insert_with(|| (r.x.clone(), 0))
                .1 += 1;
        }
        let cells = groups
            .into_iter()
            .map(|((area, t, prev, _), (x, count))| FrameCell {
                area,
                t,
                x,
                prev,
                count,
            })
            .collect();
        Self::new(cells, n_categories)
    }

    pub fn cells(&self) -> &[FrameCell<T>] {
        &self.cells
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// The cells of time `t` only.
    pub fn restrict_to_time(&self, t: usize) -> Self {
        Self {
            cells: self.cells.iter().filter(|c| c.t == t).cloned().collect(),
            n_categories: self.n_categories,
        }
    }

    /// Population size of every `(area, t)` aggregation cell.
    pub fn cell_totals(&self) -> BTreeMap<(usize, usize), u64> {
        let mut totals = BTreeMap::new();
        for c in &self.cells {
            *totals.entry((c.area, c.t)).or_insert(0) += c.count;
        }
        totals
    }

    /// [`Self::cell_totals`] as reals, the form the direct estimator takes.
    pub fn cell_sizes(&self) -> BTreeMap<(usize, usize), f64> {
        self.cell_totals()
            .into_iter()
            .map(|(k, n)| (k, n as f64))
            .collect()
    }

    /// Columns `area,t,prev,count,x1..xq`; an empty `prev` means none.
    pub fn read_csv<R: Read>(reader: R, n_categories: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::csv("population frame", e))?
            .clone();
        let expected = ["area", "t", "prev", "count"];
        if header.len() < 4 || header.iter().take(4).ne(expected) {
            return Err(Error::data(
                None,
                "frame header must start with area,t,prev,count",
            ));
        }
        let mut cells = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| Error::csv("population frame", e))?;
            let int = |j: usize| -> Result<usize> {
                rec[j]
                    .trim()
                    .parse()
                    .map_err(|_| Error::data(row, format!("bad {} value {:?}", &header[j], &rec[j])))
            };
            let prev = if rec[2].trim().is_empty() {
                None
            } else {
                Some(int(2)?)
            };
            let x = (4..rec.len())
                .map(|j| {
                    rec[j]
                        .trim()
                        .parse::<f64>()
                        .map(T::lit)
                        .map_err(|_| Error::data(row, format!("bad covariate {:?}", &rec[j])))
                })
                .collect::<Result<Vec<T>>>()?;
            cells.push(FrameCell {
                area: int(0)?,
                t: int(1)?,
                prev,
                count: int(3)? as u64,
                x,
            });
        }
        Self::new(cells, n_categories)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let q = self.cells.first().map_or(0, |c| c.x.len());
        let mut header = vec!["area".to_string(), "t".into(), "prev".into(), "count".into()];
        header.extend((1..=q).map(|j| format!("x{j}")));
        w.write_record(&header)
            .map_err(|e| Error::csv("population frame", e))?;
        for c in &self.cells {
            let mut row = vec![
                c.area.to_string(),
                c.t.to_string(),
                c.prev.map_or(String::new(), |p| p.to_string()),
                c.count.to_string(),
            ];
            row.extend(c.x.iter().map(|v| v.as_f64().to_string()));
            w.write_record(&row)
                .map_err(|e| Error::csv("population frame", e))?;
        }
        w.flush().map_err(|e| Error::io("population frame", e))
    }
}

/// Key of an aggregation cell and category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub area: usize,
    pub t: usize,
    pub category: usize,
    pub profile: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellEstimate<T> {
    pub key: CellKey,
    pub point: T,
    pub sd: T,
    pub lower: T,
    pub upper: T,
    /// Set when the variance estimate is zero because the sample cannot
    /// vary (one respondent, or all responses identical).
    pub degenerate: bool,
}

/// A fitted model ready for prediction.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel<T: Real> {
    Ordinal(PosteriorDraws<T>),
    Nominal {
        levels: Vec<PosteriorDraws<T>>,
        covariates: NominalCovariates,
    },
}

impl<T: Real> FittedModel<T> {
    pub fn n_draws(&self) -> usize {
        match self {
            Self::Ordinal(d) => d.n_draws(),
            Self::Nominal { levels, .. } => levels.iter().map(|d| d.n_draws()).min().unwrap_or(0),
        }
    }

    pub fn n_categories(&self) -> usize {
        match self {
            Self::Ordinal(d) => d.layout.n_categories(),
            Self::Nominal { levels, .. } => levels.len() + 1,
        }
    }

    fn is_longitudinal(&self) -> bool {
        match self {
            Self::Ordinal(d) => d.is_longitudinal(),
            Self::Nominal { levels, .. } => levels.first().is_some_and(|d| d.n_times > 1),
        }
    }

    /// Conditional stick probabilities for draw `r`. Cross-sectional fits
    /// ignore `t` and `prev` in the cutpoints.
    pub fn pi_tilde(&self, r: usize, x: &[T], psi: &[T], t: usize, prev: Option<usize>) -> Result<Vec<T>> {
        let (t_model, prev_model) = if self.is_longitudinal() {
            (t, prev)
        } else {
            (1, None)
        };
        match self {
            Self::Ordinal(d) => predict_pi(d, r, x, psi, t_model, prev_model),
            Self::Nominal { levels, covariates } => {
                predict_pi_nominal(levels, *covariates, r, x, psi, t_model, prev)
            }
        }
    }
}

fn clamp_open<T: Real>(p: T) -> T {
    let eps = T::default_epsilon();
    p.max(eps).min(T::one() - eps)
}

fn dot<T: Real>(a: &[T], b: impl Iterator<Item = T>) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&u, v)| acc + u * v)
}

fn check_dims<T: Real>(d: &PosteriorDraws<T>, r: usize, x: &[T], psi: &[T], t: usize) -> Result<()> {
    if r >= d.n_draws() {
        return Err(Error::Dimension(format!("draw {r} of {}", d.n_draws())));
    }
    if x.len() != d.beta.ncols() || psi.len() != d.n_basis {
        return Err(Error::Dimension(format!(
            "profile has {} covariates and {} basis values, fit has {} and {}",
            x.len(),
            psi.len(),
            d.beta.ncols(),
            d.n_basis
        )));
    }
    if t == 0 || t > d.n_times {
        return Err(Error::Dimension(format!("time {t} outside 1..={}", d.n_times)));
    }
    Ok(())
}

/// Ordinal stick probabilities `logit⁻¹(γ_slot − x'β − ψ'η_t)` at draw `r`.
pub fn predict_pi<T: Real>(
    draws: &PosteriorDraws<T>,
    r: usize,
    x: &[T],
    psi: &[T],
    t: usize,
    prev: Option<usize>,
) -> Result<Vec<T>> {
    check_dims(draws, r, x, psi, t)?;
    let base = dot(x, draws.beta.row(r).iter().copied())
        + dot(
            psi,
            (0..draws.n_basis).map(|j| draws.eta[(r, (t - 1) * draws.n_basis + j)]),
        );
    (1..draws.layout.n_categories())
        .map(|k| {
            let slot = draws.layout.index(t, prev, k)? - 1;
            Ok(clamp_open(logistic(draws.gamma[(r, slot)] - base)))
        })
        .collect()
}

/// Nominal stick probabilities `logit⁻¹(x'β_k + ψ'η_tk)` at draw `r`; `x`
/// is the raw profile, augmented here.
pub fn predict_pi_nominal<T: Real>(
    levels: &[PosteriorDraws<T>],
    covariates: NominalCovariates,
    r: usize,
    x: &[T],
    psi: &[T],
    t: usize,
    prev: Option<usize>,
) -> Result<Vec<T>> {
    let kk = levels.len() + 1;
    let xa = covariates.augment(x, prev, kk);
    levels
        .iter()
        .map(|d| {
            check_dims(d, r, &xa, psi, t)?;
            let lin = dot(&xa, d.beta.row(r).iter().copied())
                + dot(psi, (0..d.n_basis).map(|j| d.eta[(r, (t - 1) * d.n_basis + j)]));
            Ok(clamp_open(logistic(lin)))
        })
        .collect()
}

/// Category probabilities from the stick probabilities; the last entry is
/// the remaining stick.
pub fn reconstruct_pi<T: Real>(pi_tilde: &[T]) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(pi_tilde.len() + 1);
    let mut remaining = T::one();
    for &p in pi_tilde {
        if !(p > T::zero() && p < T::one()) {
            return Err(Error::Domain(format!(
                "stick probability {} outside (0, 1)",
                p.as_f64()
            )));
        }
        let piece = p * remaining;
        out.push(piece);
        remaining -= piece;
    }
    out.push(remaining);
    Ok(out)
}

/// Inverse of [`reconstruct_pi`].
pub fn factorize_pi<T: Real>(pi: &[T]) -> Result<Vec<T>> {
    if pi.len() < 2 || pi.iter().any(|&p| !(p >= T::zero())) {
        return Err(Error::Domain(
            "probability vector needs 2+ nonnegative entries".into(),
        ));
    }
    let mut suffix = vec![T::zero(); pi.len() + 1];
    for k in (0..pi.len()).rev() {
        suffix[k] = suffix[k + 1] + pi[k];
    }
    (0..pi.len() - 1)
        .map(|k| {
            if suffix[k] > T::zero() {
                Ok(pi[k] / suffix[k])
            } else {
                Err(Error::Domain(format!(
                    "no probability left at category {}",
                    k + 1
                )))
            }
        })
        .collect()
}

/// Category counts of `n` independent draws from `pi`, via conditional
/// binomials.
pub fn multinomial<R: Rng + ?Sized>(n: u64, pi: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0; pi.len()];
    let mut left = n;
    let mut mass = 1.0;
    for (k, &p) in pi.iter().enumerate().take(pi.len().saturating_sub(1)) {
        if left == 0 {
            break;
        }
        let cond = if mass > 0.0 {
            (p / mass).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let c = Binomial::new(left, cond)
            .expect("probability clamped to [0, 1]")
            .sample(rng);
        out[k] = c;
        left -= c;
        mass -= p;
    }
    if let Some(last) = out.last_mut() {
        *last += left;
    }
    out
}

/// Per-draw simulated category proportions of every `(area, t)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellDraws<T> {
    pub keys: Vec<(usize, usize)>,
    pub totals: Vec<u64>,
    pub n_categories: usize,
    /// `draws[r][cell * K + k]`.
    pub draws: Vec<Vec<T>>,
}

impl<T: Real> CellDraws<T> {
    /// Draws of one cell and category.
    pub fn series(&self, cell: usize, k: usize) -> Vec<T> {
        self.draws
            .iter()
            .map(|d| d[cell * self.n_categories + k])
            .collect()
    }
}

/// Simulates the whole population once per draw and averages within each
/// `(area, t)` cell. Draw `r` uses stream `r` of `seed`.
pub fn generate_and_aggregate<T: Real>(
    model: &FittedModel<T>,
    frame: &PopulationFrame<T>,
    basis: &BasisMatrix<T>,
    seed: u64,
) -> Result<CellDraws<T>> {
    if frame.is_empty() {
        return Err(Error::Domain("empty population frame".into()));
    }
    let kk = model.n_categories();
    if kk != frame.n_categories() {
        return Err(Error::Dimension(format!(
            "model has {kk} categories, frame {}",
            frame.n_categories()
        )));
    }
    let totals_map = frame.cell_totals();
    let keys: Vec<_> = totals_map.keys().copied().collect();
    let totals: Vec<u64> = totals_map.values().copied().collect();
    let index: BTreeMap<_, _> = keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
    let psi: Vec<Vec<T>> = (1..=basis.n_areas())
        .map(|a| basis.row(a))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, &FrameCell<T>, &[T])> = frame
        .cells()
        .iter()
        .map(|c| {
            let row = psi.get(c.area - 1).ok_or(Error::UnknownArea {
                area: c.area,
                n_areas: basis.n_areas(),
            })?;
            Ok((index[&(c.area, c.t)], c, row.as_slice()))
        })
        .collect::<Result<_>>()?;
    let draws = (0..model.n_draws())
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let mut counts = vec![0u64; keys.len() * kk];
            for &(cell, c, psi_row) in &cells {
                let pt = model.pi_tilde(r, &c.x, psi_row, c.t, c.prev)?;
                let pi: Vec<f64> = reconstruct_pi(&pt)?.iter().map(|p| p.as_f64()).collect();
                for (k, n) in multinomial(c.count, &pi, &mut rng).into_iter().enumerate() {
                    counts[cell * kk + k] += n;
                }
            }
            Ok(counts
                .iter()
                .enumerate()
                .map(|(i, &n)| T::lit(n as f64 / totals[i / kk] as f64))
                .collect())
        })
        .collect::<Result<Vec<Vec<T>>>>()?;
    Ok(CellDraws {
        keys,
        totals,
        n_categories: kk,
        draws,
    })
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, sd and equal-tailed `1 − α` interval of a set of draws.
pub fn summarize<T: Real>(key: CellKey, values: &[T], alpha: f64) -> Result<CellEstimate<T>> {
    if values.len() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 draws, got {}",
            values.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.as_f64()).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    v.sort_by(f64::total_cmp);
    let lower = quantile(&v, alpha / 2.0).min(mean);
    let upper = quantile(&v, 1.0 - alpha / 2.0).max(mean);
    Ok(CellEstimate {
        key,
        point: T::lit(mean),
        sd: T::lit(var.sqrt()),
        lower: T::lit(lower),
        upper: T::lit(upper),
        degenerate: false,
    })
}

/// [`summarize`] for every cell and category.
pub fn summarize_cells<T: Real>(draws: &CellDraws<T>, alpha: f64) -> Result<Vec<CellEstimate<T>>> {
    let mut out = Vec::with_capacity(draws.keys.len() * draws.n_categories);
    for (i, &(area, t)) in draws.keys.iter().enumerate() {
        for k in 0..draws.n_categories {
            let key = CellKey {
                area,
                t,
                category: k + 1,
                profile: None,
            };
            out.push(summarize(key, &draws.series(i, k), alpha)?);
        }
    }
    Ok(out)
}

/// Variance estimator of the direct estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DirectVariance {
    /// Treats the sample as drawn with replacement.
    #[default]
    WithReplacement,
    /// Poisson sampling with inclusion probabilities `1 / w`.
    Poisson,
}

/// Two-sided standard normal critical value.
pub fn normal_critical(alpha: f64) -> f64 {
    std::f64::consts::SQRT_2 * erfc_inv(alpha)
}

/// Horvitz-Thompson proportions of each category in one `(area, t)` cell.
/// Returns `None` when the cell has no respondents.
pub fn direct_ht<T: Real>(
    area: usize,
    t: usize,
    records: &[&UnitRecord<T>],
    n_cell: f64,
    n_categories: usize,
    alpha: f64,
    variance: DirectVariance,
) -> Result<Option<Vec<CellEstimate<T>>>> {
    if !(n_cell > 0.0) {
        return Err(Error::Domain(format!(
            "cell population {n_cell} must be positive"
        )));
    }
    if records.is_empty() {
        return Ok(None);
    }
    let z_crit = normal_critical(alpha);
    let n = records.len() as f64;
    let degenerate = records.len() < 2 || records.iter().all(|r| r.y == records[0].y);
    let mut out = Vec::with_capacity(n_categories);
    for k in 1..=n_categories {
        let z: Vec<f64> = records
            .iter()
            .map(|r| if r.y == k { r.w.as_f64() } else { 0.0 })
            .collect();
        let total: f64 = z.iter().sum();
        let point = total / n_cell;
        let var_total = match variance {
            _ if degenerate => 0.0,
            DirectVariance::WithReplacement => {
                let zbar = total / n;
                n / (n - 1.0) * z.iter().map(|v| (v - zbar).powi(2)).sum::<f64>()
            }
            DirectVariance::Poisson => z.iter().map(|v| (v * v - v).max(0.0)).sum::<f64>(),
        };
        let var = var_total / (n_cell * n_cell);
        let sd = var.sqrt();
        let point = point.clamp(0.0, 1.0);
        out.push(CellEstimate {
            key: CellKey {
                area,
                t,
                category: k,
                profile: None,
            },
            point: T::lit(point),
            sd: T::lit(sd),
            lower: T::lit((point - z_crit * sd).max(0.0)),
            upper: T::lit((point + z_crit * sd).min(1.0)),
            degenerate,
        });
    }
    Ok(Some(out))
}

/// Sum of the weights in each `(area, t)` cell, an estimate of its size.
pub fn weighted_cell_sizes<T: Real>(records: &[UnitRecord<T>]) -> BTreeMap<(usize, usize), f64> {
    let mut sizes = BTreeMap::new();
    for r in records {
        *sizes.entry((r.area, r.t)).or_insert(0.0) += r.w.as_f64();
    }
    sizes
}

/// Direct estimates of every cell in `totals` that has respondents.
pub fn direct_estimates<T: Real>(
    records: &[UnitRecord<T>],
    totals: &BTreeMap<(usize, usize), f64>,
    n_categories: usize,
    alpha: f64,
    variance: DirectVariance,
) -> Result<Vec<CellEstimate<T>>> {
    let mut by_cell: BTreeMap<(usize, usize), Vec<&UnitRecord<T>>> = BTreeMap::new();
    for r in records {
        by_cell.entry((r.area, r.t)).or_default().push(r);
    }
    let mut out = Vec::new();
    for (&(area, t), &n_cell) in totals {
        let rs = by_cell.get(&(area, t)).map_or(&[][..], |v| v.as_slice());
        if let Some(est) = direct_ht(area, t, rs, n_cell, n_categories, alpha, variance)? {
            out.extend(est);
        }
    }
    Ok(out)
}

/// Cell-estimate CSV with a `method` tag column.
pub fn write_cell_estimates<T: Real, W: Write>(
    writer: W,
    method: &str,
    estimates: &[CellEstimate<T>],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "area", "t", "category", "method", "point", "sd", "lower", "upper", "flag",
    ])
    .map_err(|e| Error::csv("cell estimates", e))?;
    for e in estimates {
        w.write_record([
            e.key.area.to_string(),
            e.key.t.to_string(),
            e.key.category.to_string(),
            method.to_string(),
            e.point.as_f64().to_string(),
            e.sd.as_f64().to_string(),
            e.lower.as_f64().to_string(),
            e.upper.as_f64().to_string(),
            if e.degenerate {
                "degenerate".into()
            } else {
                String::new()
            },
        ])
        .map_err(|e| Error::csv("cell estimates", e))?;
    }
    w.flush().map_err(|e| Error::io("cell estimates", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::PosteriorDraws;
    use crate::survey::{CutpointLayout, Family};
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_draws(n_draws: usize, kk: usize, n_times: usize, q: usize, m: usize) -> PosteriorDraws<f64> {
        let layout = CutpointLayout::new(kk, n_times).unwrap();
        PosteriorDraws {
            gamma: DMatrix::zeros(n_draws, layout.count()),
            beta: DMatrix::zeros(n_draws, q),
            eta: DMatrix::zeros(n_draws, m * n_times),
            phi: vec![],
            sigma2_eta: vec![1.0; n_draws],
            sigma2_eta1: vec![],
            n_basis: m,
            n_times,
            family: Family::Ordinal,
            layout,
        }
    }

    fn key() -> CellKey {
        CellKey {
            area: 1,
            t: 1,
            category: 1,
            profile: None,
        }
    }

    fn rec(y: usize, w: f64) -> UnitRecord<f64> {
        UnitRecord {
            unit_id: "u".into(),
            t: 1,
            area: 1,
            x: vec![],
            y,
            w,
            prev: None,
        }
    }

    #[test]
    fn zero_parameters_give_even_sticks() {
        let d = zero_draws(1, 4, 1, 1, 2);
        let pt = predict_pi(&d, 0, &[0.3], &[0.1, 0.2], 1, None).unwrap();
        assert_eq!(pt, vec![0.5, 0.5, 0.5]);
        assert_eq!(reconstruct_pi(&pt).unwrap(), vec![0.5, 0.25, 0.125, 0.125]);
        assert_eq!(
            factorize_pi(&[0.5, 0.25, 0.125, 0.125]).unwrap(),
            vec![0.5, 0.5, 0.5]
        );
    }

    #[test]
    fn cutpoint_slot_drives_the_first_stick() {
        let mut d = zero_draws(1, 4, 1, 0, 0);
        d.gamma[(0, 0)] = 1.0;
        let pt = predict_pi(&d, 0, &[], &[], 1, None).unwrap();
        assert!((pt[0] - 0.731_06).abs() < 1e-5);
        let long = zero_draws(1, 4, 2, 0, 0);
        assert!(matches!(
            predict_pi(&long, 0, &[], &[], 1, Some(2)),
            Err(Error::Cutpoint(_))
        ));
        assert!(predict_pi(&long, 0, &[], &[], 2, Some(2)).is_ok());
    }

    #[test]
    fn covariates_lower_ordinal_sticks_and_raise_nominal_ones() {
        let mut d = zero_draws(1, 3, 1, 1, 0);
        d.beta[(0, 0)] = 2.0;
        let ord = predict_pi(&d, 0, &[1.0], &[], 1, None).unwrap();
        assert!(ord.iter().all(|&p| (p - logistic(-2.0)).abs() < 1e-15));
        let mut b = d.clone();
        b.family = Family::Binary { level: 1 };
        let nom = predict_pi_nominal(
            &[b.clone(), b],
            NominalCovariates::default(),
            0,
            &[1.0],
            &[],
            1,
            None,
        )
        .unwrap();
        assert!(nom.iter().all(|&p| (p - logistic(2.0)).abs() < 1e-15));
    }

    #[test]
    fn nominal_prediction_uses_the_augmented_profile() {
        let mut b = zero_draws(1, 3, 2, 5, 0);
        b.family = Family::Binary { level: 1 };
        // intercept, prev = 1, prev = 2, prev = 3, x
        b.beta
            .copy_from(&DMatrix::from_row_slice(1, 5, &[0.5, 0.0, 1.0, 0.0, 0.0]));
        let cov = NominalCovariates {
            intercept: true,
            previous_response: true,
        };
        let p = predict_pi_nominal(&[b.clone(), b], cov, 0, &[0.0], &[], 2, Some(2)).unwrap();
        assert!((p[0] - logistic(1.5)).abs() < 1e-15);
    }

    #[test]
    fn reconstruct_rejects_closed_endpoints_and_approaches_the_limit() {
        assert!(reconstruct_pi::<f64>(&[1.0, 0.5]).is_err());
        assert!(reconstruct_pi::<f64>(&[0.0, 0.5]).is_err());
        let pi = reconstruct_pi::<f64>(&[1.0 - 1e-12, 0.5, 0.5]).unwrap();
        assert!((pi[0] - 1.0).abs() < 1e-11);
    }

    proptest! {
        #[test]
        fn stick_roundtrip(pt in prop::collection::vec(1e-6f64..1.0 - 1e-6, 1..8)) {
            let pi = reconstruct_pi(&pt).unwrap();
            prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let back = factorize_pi(&pi).unwrap();
            for (a, b) in back.iter().zip(&pt) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn multinomial_counts_add_up(n in 0u64..10_000, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = multinomial(n, &[0.1, 0.2, 0.3, 0.4], &mut rng);
            prop_assert_eq!(c.iter().sum::<u64>(), n);
        }
    }

    #[test]
    fn multinomial_degenerate_and_concentration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(multinomial(1, &[1.0, 0.0, 0.0, 0.0], &mut rng), vec![1, 0, 0, 0]);
        let n = 1_000_000;
        let c = multinomial(n, &[0.25; 4], &mut rng);
        for v in c {
            assert!((v as f64 / n as f64 - 0.25).abs() < 0.002);
        }
    }

    fn frame(cells: &[(usize, usize, u64)]) -> PopulationFrame<f64> {
        PopulationFrame::new(
            cells
                .iter()
                .map(|&(area, t, count)| FrameCell {
                    area,
                    t,
                    x: vec![],
                    prev: None,
                    count,
                })
                .collect(),
            4,
        )
        .unwrap()
    }

    #[test]
    fn aggregation_counts_each_cell() {
        let basis = BasisMatrix::empty(2);
        let model = FittedModel::Ordinal(zero_draws(3, 4, 1, 0, 0));
        let f = frame(&[(1, 1, 500), (2, 1, 500), (1, 1, 100)]);
        let out = generate_and_aggregate(&model, &f, &basis, 9).unwrap();
        assert_eq!(out.keys, vec![(1, 1), (2, 1)]);
        assert_eq!(out.totals, vec![600, 500]);
        for d in &out.draws {
            for cell in 0..2 {
                let s: f64 = d[cell * 4..cell * 4 + 4].iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(out, generate_and_aggregate(&model, &f, &basis, 9).unwrap());
        assert!(generate_and_aggregate(&model, &frame(&[]), &basis, 9).is_err());

        // two equal areas merged into one cell average their means
        let pooled = frame(&[(1, 1, 500), (1, 1, 500)]);
        let merged = generate_and_aggregate(&model, &pooled, &BasisMatrix::empty(1), 9).unwrap();
        assert_eq!(merged.totals, vec![1000]);
    }

    #[test]
    fn frame_from_records_groups_profiles() {
        let mut rs = vec![rec(1, 1.0), rec(2, 1.0), rec(3, 1.0)];
        rs[2].area = 2;
        let f = PopulationFrame::from_records(&rs, 4).unwrap();
        assert_eq!(f.cells().len(), 2);
        assert_eq!(f.cells()[0].count, 2);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = PopulationFrame::<f64>::read_csv(buf.as_slice(), 4).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn summary_examples() {
        let s = summarize(key(), &[0.3; 5], 0.05).unwrap();
        assert_eq!((s.point, s.sd, s.lower, s.upper), (0.3, 0.0, 0.3, 0.3));
        let s = summarize(key(), &[0.0, 1.0, 0.0, 1.0], 0.05).unwrap();
        assert_eq!(s.point, 0.5);
        assert!(summarize(key(), &[1.0], 0.05).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z: Vec<f64> = (0..10_000)
            .map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal))
            .collect();
        let s = summarize(key(), &z, 0.05).unwrap();
        assert!((s.lower + 1.96).abs() < 0.05 && (s.upper - 1.96).abs() < 0.05);
    }

    #[test]
    fn direct_examples() {
        let rs = [rec(1, 2.0), rec(2, 2.0)];
        let refs: Vec<_> = rs.iter().collect();
        let est = direct_ht(1, 1, &refs, 4.0, 4, 0.05, DirectVariance::WithReplacement)
            .unwrap()
            .unwrap();
        assert_eq!(est[0].point, 0.5);
        assert!(!est[0].degenerate);
        assert!(
            direct_ht::<f64>(1, 1, &[], 4.0, 4, 0.05, DirectVariance::WithReplacement)
                .unwrap()
                .is_none()
        );
        assert!(direct_ht(1, 1, &refs, 0.0, 4, 0.05, DirectVariance::WithReplacement).is_err());
        let same = [rec(3, 2.0), rec(3, 5.0)];
        let refs: Vec<_> = same.iter().collect();
        let est = direct_ht(1, 1, &refs, 10.0, 4, 0.05, DirectVariance::Poisson)
            .unwrap()
            .unwrap();
        assert!(est
            .iter()
            .all(|e| e.degenerate && e.sd == 0.0 && e.lower == e.upper));
    }

    #[test]
    fn equal_weights_give_sample_proportions() {
        let ys = [1, 2, 2, 4, 1, 1];
        let n_cell = 60.0;
        let rs: Vec<_> = ys.iter().map(|&y| rec(y, n_cell / ys.len() as f64)).collect();
        let refs: Vec<_> = rs.iter().collect();
        let est = direct_ht(1, 1, &refs, n_cell, 4, 0.05, DirectVariance::WithReplacement)
            .unwrap()
            .unwrap();
        let expect = [0.5, 2.0 / 6.0, 0.0, 1.0 / 6.0];
        for (e, p) in est.iter().zip(expect) {
            assert!((e.point - p).abs() < 1e-15);
        }
        // with-replacement variance of a proportion: p(1 - p) / (n - 1) · n / n
        let p: f64 = 0.5;
        assert!((est[0].sd.powi(2) - p * (1.0 - p) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn critical_value() {
        assert!((normal_critical(0.05) - 1.959_964).abs() < 1e-6);
    }

    #[test]
    fn cell_estimate_csv_has_one_row_per_estimate() {
        let rs = [rec(1, 2.0), rec(2, 2.0)];
        let mut totals = BTreeMap::new();
        totals.insert((1, 1), 4.0);
        totals.insert((2, 1), 7.0);
        let est = direct_estimates(&rs, &totals, 4, 0.05, DirectVariance::WithReplacement).unwrap();
        assert_eq!(est.len(), 4);
        let mut buf = Vec::new();
        write_cell_estimates(&mut buf, "direct", &est).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("area,t,category,method,point,sd,lower,upper,flag\n1,1,1,direct,0.5,"));
    }
}
