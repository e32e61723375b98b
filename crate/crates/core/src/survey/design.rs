use nalgebra::{DMatrix, DVector};

use super::{rescale_weights_grouped, stick_break, CutpointLayout, UnitRecord, WeightGrouping};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spatial::BasisMatrix;

/// Whether the model pools time points with AR(1) effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeStructure {
    /// One time point: every record is treated as `t = 1`.
    CrossSectional,
    Longitudinal {
        n_times: usize,
    },
}

impl TimeStructure {
    pub fn n_times(&self) -> usize {
        match *self {
            TimeStructure::CrossSectional => 1,
            TimeStructure::Longitudinal { n_times } => n_times,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Sequential ordinal model with cutpoints `γ`.
    Ordinal,
    /// Binary model for break `level` of the stick, no cutpoints.
    Binary { level: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignOptions {
    pub n_categories: usize,
    pub time: TimeStructure,
    /// Use rescaled survey weights; otherwise every weight is 1.
    pub weighted: bool,
    pub grouping: WeightGrouping,
    /// Covariate count for an empty record list.
    pub n_covariates: Option<usize>,
}

impl DesignOptions {
    pub fn new(n_categories: usize, time: TimeStructure) -> Self {
        Self {
            n_categories,
            time,
            weighted: true,
            grouping: WeightGrouping::PerTime,
            n_covariates: None,
        }
    }

    pub fn weighted(mut self, weighted: bool) -> Self {
        self.weighted = weighted;
        self
    }

    pub fn grouping(mut self, grouping: WeightGrouping) -> Self {
        self.grouping = grouping;
        self
    }

    pub fn n_covariates(mut self, q: usize) -> Self {
        self.n_covariates = Some(q);
        self
    }
}

/// Extra columns prepended to `x` in the nominal designs, which have no
/// cutpoints to absorb the baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NominalCovariates {
    pub intercept: bool,
    /// Indicators for the previous response `1..=K` (no previous response is
    /// the reference).
    pub previous_response: bool,
}

impl NominalCovariates {
    /// Number of columns added for `n_categories` response categories.
    pub fn n_extra(&self, n_categories: usize) -> usize {
        usize::from(self.intercept) + if self.previous_response { n_categories } else { 0 }
    }

    /// Covariate row `x` with the extra columns prepended.
    pub fn augment<T: Real>(&self, x: &[T], prev: Option<usize>, n_categories: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_extra(n_categories) + x.len());
        if self.intercept {
            out.push(T::one());
        }
        if self.previous_response {
            out.extend((1..=n_categories).map(|p| if prev == Some(p) { T::one() } else { T::zero() }));
        }
        out.extend_from_slice(x);
        out
    }
}

/// Bookkeeping for one stacked row, i.e. one `(unit, t, k)` break.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow<T> {
    /// Position of the source record.
    pub unit_time: usize,
    /// Time block of the spatial effect, 1-based.
    pub time: usize,
    pub area: usize,
    pub k: usize,
    /// 0-based cutpoint, `None` for binary designs.
    pub cutpoint: Option<usize>,
    pub outcome: T,
    pub trials: T,
    /// Rescaled weight, or 1 when unweighted.
    pub weight: T,
    pub kappa: T,
}

impl<T: Real> DesignRow<T> {
    /// PG shape `w̃ · n` of the row.
    pub fn shape(&self) -> T {
        self.weight * self.trials
    }
}

/// The stacked augmented design.
///
/// Covariate and basis rows are stored with their sign folded in, so the
/// linear predictor of every row is `γ[cutpoint] + x_row·β + psi_row·η_time`
/// (ordinal rows carry `-x` and `-ψ`).
#[derive(Debug, Clone, PartialEq)]
pub struct StickBrokenDesign<T: Real> {
    rows: Vec<DesignRow<T>>,
    x: DMatrix<T>,
    psi: DMatrix<T>,
    family: Family,
    layout: CutpointLayout,
    time: TimeStructure,
    n_unit_times: usize,
    rows_by_time: Vec<Vec<usize>>,
}

impl<T: Real> StickBrokenDesign<T> {
    pub fn rows(&self) -> &[DesignRow<T>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Signed covariate rows (`n_rows × q`).
    pub fn x_rows(&self) -> &DMatrix<T> {
        &self.x
    }

    /// Signed basis rows (`n_rows × m`).
    pub fn psi_rows(&self) -> &DMatrix<T> {
        &self.psi
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn time_structure(&self) -> TimeStructure {
        self.time
    }

    pub fn layout(&self) -> CutpointLayout {
        self.layout
    }

    pub fn n_categories(&self) -> usize {
        self.layout.n_categories()
    }

    pub fn n_times(&self) -> usize {
        self.time.n_times()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_basis(&self) -> usize {
        self.psi.ncols()
    }

    /// `g` for ordinal designs, 0 for binary ones.
    pub fn n_cutpoints(&self) -> usize {
        match self.family {
            Family::Ordinal => self.layout.count(),
            Family::Binary { .. } => 0,
        }
    }

    /// Number of records that contributed rows.
    pub fn n_unit_times(&self) -> usize {
        self.n_unit_times
    }

    /// Row indices per time block (`[t - 1]`).
    pub fn rows_by_time(&self) -> &[Vec<usize>] {
        &self.rows_by_time
    }

    /// Cutpoint indicator of row `i` (length `g`).
    pub fn u_vector(&self, i: usize) -> DVector<T> {
        let mut u = DVector::zeros(self.n_cutpoints());
        if let Some(c) = self.rows[i].cutpoint {
            u[c] = T::one();
        }
        u
    }

    /// Sign applied to `x` and `ψ` in the linear predictor.
    pub fn sign(&self) -> T {
        match self.family {
            Family::Ordinal => -T::one(),
            Family::Binary { .. } => T::one(),
        }
    }

    /// Linear predictor of row `i` at the given parameters; `eta[t - 1]` is
    /// the spatial effect of time block `t`.
    pub fn linear_predictor(&self, i: usize, gamma: &[T], beta: &[T], eta: &[DVector<T>]) -> T {
        let row = &self.rows[i];
        let mut v = row.cutpoint.map_or(T::zero(), |c| gamma[c]);
        for (j, b) in beta.iter().enumerate() {
            v += self.x[(i, j)] * *b;
        }
        let e = &eta[row.time - 1];
        for j in 0..self.psi.ncols() {
            v += self.psi[(i, j)] * e[j];
        }
        v
    }
}

struct RawRow<T> {
    row: DesignRow<T>,
    x: Vec<T>,
}

fn validate<T: Real>(
    records: &[UnitRecord<T>],
    basis: &BasisMatrix<T>,
    options: &DesignOptions,
) -> Result<usize> {
    let q = options
        .n_covariates
        .or_else(|| records.first().map(|r| r.x.len()))
        .unwrap_or(0);
    let n_times = options.time.n_times();
    if n_times == 0 {
        return Err(Error::Dimension("a longitudinal design needs T >= 1".into()));
    }
    for (i, r) in records.iter().enumerate() {
        if r.x.len() != q {
            return Err(Error::Dimension(format!(
                "record {} has {} covariates, expected {q}",
                i + 1,
                r.x.len()
            )));
        }
        if r.area == 0 || r.area > basis.n_areas() {
            return Err(Error::UnknownArea {
                area: r.area,
                n_areas: basis.n_areas(),
            });
        }
        if r.y == 0 || r.y > options.n_categories {
            return Err(Error::data(
                i + 1,
                format!("response {} outside 1..={}", r.y, options.n_categories),
            ));
        }
        if matches!(options.time, TimeStructure::Longitudinal { .. }) && (r.t == 0 || r.t > n_times) {
            return Err(Error::data(i + 1, format!("time {} outside 1..={n_times}", r.t)));
        }
    }
    Ok(q)
}

fn record_weights<T: Real>(records: &[UnitRecord<T>], options: &DesignOptions) -> Result<Vec<T>> {
    if !options.weighted || records.is_empty() {
        return Ok(vec![T::one(); records.len()]);
    }
    let w: Vec<T> = records.iter().map(|r| r.w).collect();
    let groups: Vec<usize> = match options.grouping {
        WeightGrouping::PerTime => records.iter().map(|r| r.t).collect(),
        WeightGrouping::Pooled => vec![0; records.len()],
    };
    rescale_weights_grouped(&w, &groups)
}

fn assemble<T: Real>(
    raw: Vec<RawRow<T>>,
    records: &[UnitRecord<T>],
    basis: &BasisMatrix<T>,
    q: usize,
    family: Family,
    layout: CutpointLayout,
    time: TimeStructure,
) -> StickBrokenDesign<T> {
    let n = raw.len();
    let m = basis.n_columns();
    let sign = match family {
        Family::Ordinal => -T::one(),
        Family::Binary { .. } => T::one(),
    };
    let mut x = DMatrix::zeros(n, q);
    let mut psi = DMatrix::zeros(n, m);
    let mut rows = Vec::with_capacity(n);
    let mut rows_by_time = vec![Vec::new(); time.n_times()];
    let mut used = vec![false; records.len()];
    for (i, r) in raw.into_iter().enumerate() {
        for (j, v) in r.x.iter().enumerate() {
            x[(i, j)] = sign * *v;
        }
        let area = r.row.area - 1;
        for j in 0..m {
            psi[(i, j)] = sign * basis.values()[(area, j)];
        }
        rows_by_time[r.row.time - 1].push(i);
        used[r.row.unit_time] = true;
        rows.push(r.row);
    }
    StickBrokenDesign {
        rows,
        x,
        psi,
        family,
        layout,
        time,
        n_unit_times: used.iter().filter(|&&u| u).count(),
        rows_by_time,
    }
}

/// Stacks every record's stick-breaking rows into the ordinal design.
///
/// Weighted rows carry `κ = w̃(outcome - trials/2)`, unweighted rows
/// `outcome - 1/2` with unit weight.
pub fn build_design<T: Real>(
    records: &[UnitRecord<T>],
    basis: &BasisMatrix<T>,
    options: &DesignOptions,
) -> Result<StickBrokenDesign<T>> {
    let q = validate(records, basis, options)?;
    let layout = CutpointLayout::new(options.n_categories, options.time.n_times())?;
    let weights = record_weights(records, options)?;
    let half = T::lit(0.5);
    let mut raw = Vec::new();
    for (i, (r, &w)) in records.iter().zip(&weights).enumerate() {
        let sb = stick_break(r.y, options.n_categories).map_err(|e| match e {
            Error::Data { msg, .. } => Error::data(i + 1, msg),
            other => other,
        })?;
        let (time, prev) = match options.time {
            TimeStructure::CrossSectional => (1, None),
            TimeStructure::Longitudinal { .. } => (r.t, r.prev),
        };
        for k in 1..=sb.n_rows() {
            let outcome = T::count(sb.outcomes[k - 1] as usize);
            let trials = T::count(sb.trials[k - 1] as usize);
            let cut = layout.index(time, prev, k).map_err(|e| match e {
                Error::Cutpoint(msg) => Error::Cutpoint(format!("record {}: {msg}", i + 1)),
                other => other,
            })?;
            raw.push(RawRow {
                row: DesignRow {
                    unit_time: i,
                    time,
                    area: r.area,
                    k,
                    cutpoint: Some(cut - 1),
                    outcome,
                    trials,
                    weight: w,
                    kappa: w * (outcome - trials * half),
                },
                x: r.x.clone(),
            });
        }
    }
    Ok(assemble(
        raw,
        records,
        basis,
        q,
        Family::Ordinal,
        layout,
        options.time,
    ))
}

/// Binary sub-design for stick level `level`: one row per record with
/// `y >= level`, outcome `1{y = level}`.
pub fn build_binary_design<T: Real>(
    records: &[UnitRecord<T>],
    basis: &BasisMatrix<T>,
    level: usize,
    options: &DesignOptions,
    extra: NominalCovariates,
) -> Result<StickBrokenDesign<T>> {
    let kk = options.n_categories;
    if level == 0 || level >= kk {
        return Err(Error::Domain(format!("stick level {level} outside 1..{kk}")));
    }
    let q = validate(records, basis, options)?;
    let layout = CutpointLayout::new(kk, options.time.n_times())?;
    let weights = record_weights(records, options)?;
    let half = T::lit(0.5);
    let q_total = q + extra.n_extra(kk);
    let mut raw = Vec::new();
    for (i, (r, &w)) in records.iter().zip(&weights).enumerate() {
        if r.y < level {
            continue;
        }
        let outcome = if r.y == level { T::one() } else { T::zero() };
        let trials = T::one();
        let time = match options.time {
            TimeStructure::CrossSectional => 1,
            TimeStructure::Longitudinal { .. } => r.t,
        };
        let x = extra.augment(&r.x, r.prev, kk);
        raw.push(RawRow {
            row: DesignRow {
                unit_time: i,
                time,
                area: r.area,
                k: level,
                cutpoint: None,
                outcome,
                trials,
                weight: w,
                kappa: w * (outcome - trials * half),
            },
            x,
        });
    }
    Ok(assemble(
        raw,
        records,
        basis,
        q_total,
        Family::Binary { level },
        layout,
        options.time,
    ))
}

/// The `K - 1` binary sub-designs of the nominal model.
pub fn build_nominal_designs<T: Real>(
    records: &[UnitRecord<T>],
    basis: &BasisMatrix<T>,
    options: &DesignOptions,
    extra: NominalCovariates,
) -> Result<Vec<StickBrokenDesign<T>>> {
    (1..options.n_categories)
        .map(|level| build_binary_design(records, basis, level, options, extra))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::{moran_basis, AdjacencyGraph};
    use proptest::prelude::*;

    fn rec(t: usize, area: usize, y: usize, w: f64, x: Vec<f64>) -> UnitRecord<f64> {
        UnitRecord {
            unit_id: format!("u{t}{area}{y}"),
            t,
            area,
            x,
            y,
            w,
            prev: None,
        }
    }

    fn basis() -> BasisMatrix<f64> {
        moran_basis(&AdjacencyGraph::grid(2, 2).unwrap(), None).unwrap()
    }

    #[test]
    fn single_record_unweighted() {
        let r = vec![rec(1, 1, 2, 3.0, vec![1.0])];
        let opts = DesignOptions::new(4, TimeStructure::CrossSectional).weighted(false);
        let d = build_design(&r, &basis(), &opts).unwrap();
        assert_eq!(d.n_rows(), 2);
        let kappa: Vec<f64> = d.rows().iter().map(|r| r.kappa).collect();
        assert_eq!(kappa, vec![-0.5, 0.5]);
        assert_eq!(d.x_rows()[(0, 0)], -1.0);
        assert_eq!(d.x_rows()[(1, 0)], -1.0);
        assert_eq!(d.n_cutpoints(), 3);
        assert_eq!(d.u_vector(1).as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn weighted_kappa_scales_with_weight() {
        // weights (4, 1, 1) in one week: n = 3, Σw = 6, so w̃ = (2, 0.5, 0.5)
        let records: Vec<_> = [4.0, 1.0, 1.0]
            .iter()
            .enumerate()
            .map(|(i, &w)| UnitRecord {
                unit_id: format!("{i}"),
                ..rec(1, 1, 2, w, vec![1.0])
            })
            .collect();
        let opts = DesignOptions::new(4, TimeStructure::CrossSectional);
        let d = build_design(&records, &basis(), &opts).unwrap();
        let k: Vec<f64> = d.rows()[..2].iter().map(|r| r.kappa).collect();
        assert_eq!(k, vec![-1.0, 1.0]);
        assert_eq!(d.rows()[0].shape(), 2.0);
        assert_eq!(d.rows()[2].kappa, -0.25);
    }

    #[test]
    fn constant_weights_match_the_unweighted_design() {
        let records: Vec<_> = (0..5)
            .map(|i| UnitRecord {
                unit_id: format!("{i}"),
                ..rec(1, 1 + i % 4, 1 + i % 4, 2.0, vec![0.3])
            })
            .collect();
        let opts = DesignOptions::new(4, TimeStructure::CrossSectional);
        let weighted = build_design(&records, &basis(), &opts).unwrap();
        let plain = build_design(&records, &basis(), &opts.weighted(false)).unwrap();
        assert_eq!(weighted, plain);
    }

    #[test]
    fn empty_records_give_an_empty_design() {
        let opts = DesignOptions::new(4, TimeStructure::CrossSectional).n_covariates(2);
        let d = build_design::<f64>(&[], &basis(), &opts).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.n_covariates(), 2);
        assert_eq!(d.n_basis(), basis().n_columns());
    }

    #[test]
    fn errors_on_bad_records() {
        let opts = DesignOptions::new(4, TimeStructure::CrossSectional);
        let bad_area = vec![rec(1, 9, 1, 1.0, vec![])];
        assert!(matches!(
            build_design(&bad_area, &basis(), &opts),
            Err(Error::UnknownArea { area: 9, .. })
        ));
        let ragged = vec![rec(1, 1, 1, 1.0, vec![1.0]), rec(1, 2, 1, 1.0, vec![])];
        assert!(matches!(
            build_design(&ragged, &basis(), &opts),
            Err(Error::Dimension(_))
        ));
        let bad_y = vec![rec(1, 1, 5, 1.0, vec![])];
        assert!(build_design(&bad_y, &basis(), &opts).is_err());
        let late = vec![rec(4, 1, 1, 1.0, vec![])];
        let long = DesignOptions::new(4, TimeStructure::Longitudinal { n_times: 3 });
        assert!(build_design(&late, &basis(), &long).is_err());
    }

    #[test]
    fn longitudinal_rows_use_history_cutpoints() {
        let mut r = vec![rec(1, 1, 2, 1.0, vec![]), rec(2, 1, 1, 1.0, vec![])];
        r[1].unit_id = r[0].unit_id.clone();
        crate::survey::derive_prev(&mut r).unwrap();
        let opts = DesignOptions::new(4, TimeStructure::Longitudinal { n_times: 2 });
        let d = build_design(&r, &basis(), &opts).unwrap();
        assert_eq!(d.n_cutpoints(), 18);
        let layout = d.layout();
        assert_eq!(
            d.rows()[2].cutpoint,
            Some(layout.index(2, Some(2), 1).unwrap() - 1)
        );
        assert_eq!(d.rows_by_time()[1], vec![2]);
        assert_eq!(d.rows()[2].time, 2);
    }

    #[test]
    fn per_time_rescaling_sums_to_each_week() {
        let mut r: Vec<_> = (0..6)
            .map(|i| rec(1 + i % 2, 1, 3, 1.0 + i as f64, vec![]))
            .collect();
        for (i, x) in r.iter_mut().enumerate() {
            x.unit_id = format!("{i}");
        }
        let opts = DesignOptions::new(3, TimeStructure::Longitudinal { n_times: 2 });
        let d = build_design(&r, &basis(), &opts).unwrap();
        for t in 1..=2 {
            let s: f64 = d
                .rows()
                .iter()
                .filter(|row| row.time == t && row.k == 1)
                .map(|row| row.weight)
                .sum();
            assert!((s - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_design_keeps_units_still_on_the_stick() {
        let r = vec![
            rec(1, 1, 1, 1.0, vec![0.5]),
            rec(1, 2, 2, 1.0, vec![0.5]),
            rec(1, 3, 3, 1.0, vec![0.5]),
        ];
        let opts = DesignOptions::new(3, TimeStructure::CrossSectional);
        let extra = NominalCovariates {
            intercept: true,
            previous_response: false,
        };
        let ds = build_nominal_designs(&r, &basis(), &opts, extra).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].n_rows(), 3);
        assert_eq!(ds[1].n_rows(), 2);
        assert_eq!(ds[1].rows()[0].outcome, 1.0);
        assert_eq!(ds[1].n_cutpoints(), 0);
        assert_eq!(ds[1].x_rows().ncols(), 2);
        assert_eq!(ds[1].x_rows()[(0, 1)], 0.5);
        assert!(build_binary_design(&r, &basis(), 3, &opts, extra).is_err());
    }

    fn arb_records() -> impl Strategy<Value = Vec<UnitRecord<f64>>> {
        prop::collection::vec((1usize..=4, 1usize..=2, 0.1f64..50.0), 0..40).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (y, t, w))| UnitRecord {
                    unit_id: format!("{i}"),
                    t,
                    area: 1 + i % 4,
                    x: vec![i as f64 * 0.1],
                    y,
                    w,
                    prev: None,
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn row_counts_and_weight_totals(records in arb_records()) {
            let opts = DesignOptions::new(4, TimeStructure::Longitudinal { n_times: 2 })
                .n_covariates(1);
            let d = build_design(&records, &basis(), &opts).unwrap();
            for (i, r) in records.iter().enumerate() {
                let n = d.rows().iter().filter(|row| row.unit_time == i).count();
                prop_assert_eq!(n, r.y.min(3));
            }
            let mut total = 0.0;
            for row in d.rows().iter().filter(|row| row.k == 1) {
                total += row.weight;
            }
            let n = records.len() as f64;
            prop_assert!((total - n).abs() <= 1e-12 * n.max(1.0));
            for i in 0..d.n_rows() {
                let u = d.u_vector(i);
                prop_assert_eq!(u.iter().filter(|&&v| v == 1.0).count(), 1);
                prop_assert_eq!(u.sum(), 1.0);
            }
        }
    }
}
