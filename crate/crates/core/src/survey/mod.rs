//! Survey microdata: records, weight rescaling, the stick-breaking
//! factorisation of ordinal responses and the cutpoint layout.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Real;

mod design;
mod ingest;

pub use design::{
    build_binary_design, build_design, build_nominal_designs, DesignOptions, DesignRow, Family,
    NominalCovariates, StickBrokenDesign, TimeStructure,
};
pub use ingest::{ingest_csv, parse_records, write_records_csv};

/// One respondent at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord<T> {
    pub unit_id: String,
    /// Time index, 1-based.
    pub t: usize,
    /// Area index, 1-based.
    pub area: usize,
    /// Covariates with reference levels already dropped and no intercept.
    pub x: Vec<T>,
    /// Response category in `1..=K`.
    pub y: usize,
    /// Raw survey weight.
    pub w: T,
    /// Response at `t - 1`, if the unit was observed then.
    pub prev: Option<usize>,
}

/// Sets `prev` on every record from the same unit's record at `t - 1`.
///
/// Fails on a duplicated `(unit_id, t)` pair, reporting the 1-based position
/// of the second occurrence.
pub fn derive_prev<T>(records: &mut [UnitRecord<T>]) -> Result<()> {
    let mut seen: HashMap<(&str, usize), (usize, usize)> = HashMap::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if seen.insert((r.unit_id.as_str(), r.t), (i, r.y)).is_some() {
            return Err(Error::data(
                i + 1,
                format!("unit `{}` appears twice at t = {}", r.unit_id, r.t),
            ));
        }
    }
    let prev: Vec<Option<usize>> = records
        .iter()
        .map(|r| {
            r.t.checked_sub(1)
                .and_then(|p| seen.get(&(r.unit_id.as_str(), p)))
                .map(|&(_, y)| y)
        })
        .collect();
    for (r, p) in records.iter_mut().zip(prev) {
        r.prev = p;
    }
    Ok(())
}

/// How weights are pooled before rescaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightGrouping {
    /// Each time point rescales to its own sample size.
    #[default]
    PerTime,
    /// All records rescale together.
    Pooled,
}

/// `w̃ᵢ = n·wᵢ / Σw`, so the rescaled weights sum to the sample size.
pub fn rescale_weights<T: Real>(w: &[T]) -> Result<Vec<T>> {
    if w.is_empty() {
        return Err(Error::data(None, "cannot rescale an empty weight vector"));
    }
    let mut total = T::zero();
    for (i, &wi) in w.iter().enumerate() {
        if !(wi > T::zero()) || !wi.is_finite_real() {
            return Err(Error::data(i + 1, format!("weight must be positive, got {wi}")));
        }
        total += wi;
    }
    let n = T::count(w.len());
    if w.iter().all(|&wi| wi == w[0]) {
        return Ok(vec![T::one(); w.len()]);
    }
    Ok(w.iter().map(|&wi| n * wi / total).collect())
}

/// [`rescale_weights`] applied within each group label independently.
pub fn rescale_weights_grouped<T: Real>(w: &[T], groups: &[usize]) -> Result<Vec<T>> {
    if w.len() != groups.len() {
        return Err(Error::Dimension(format!(
            "{} weights but {} group labels",
            w.len(),
            groups.len()
        )));
    }
    if w.is_empty() {
        return Err(Error::data(None, "cannot rescale an empty weight vector"));
    }
    let mut members: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, &g) in groups.iter().enumerate() {
        members.entry(g).or_default().push(i);
    }
    let mut out = vec![T::zero(); w.len()];
    for idx in members.values() {
        let sub: Vec<T> = idx.iter().map(|&i| w[i]).collect();
        let scaled = rescale_weights(&sub).map_err(|e| match e {
            Error::Data { row: Some(r), msg } => Error::data(idx[r - 1] + 1, msg),
            other => other,
        })?;
        for (&i, s) in idx.iter().zip(scaled) {
            out[i] = s;
        }
    }
    Ok(out)
}

/// One-hot encoding of a response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseEncoding {
    pub y_tilde: Vec<u8>,
}

/// Sequential binary pieces of one ordinal response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StickBreak {
    pub encoding: ResponseEncoding,
    /// `1{y = k}` for `k = 1..K-1`.
    pub outcomes: Vec<u8>,
    /// 1 while the stick is still intact at break `k`, else 0.
    pub trials: Vec<u8>,
}

impl StickBreak {
    /// Breaks that carry information: `min(y, K - 1)`.
    pub fn n_rows(&self) -> usize {
        self.trials.iter().filter(|&&n| n > 0).count()
    }
}

pub fn stick_break(y: usize, n_categories: usize) -> Result<StickBreak> {
    if n_categories < 2 {
        return Err(Error::Domain(format!(
            "need at least two categories, got {n_categories}"
        )));
    }
    if y == 0 || y > n_categories {
        return Err(Error::data(
            None,
            format!("response {y} outside 1..={n_categories}"),
        ));
    }
    let mut y_tilde = vec![0; n_categories];
    y_tilde[y - 1] = 1;
    let outcomes = (1..n_categories).map(|k| u8::from(k == y)).collect();
    let trials = (1..n_categories).map(|k| u8::from(k <= y)).collect();
    Ok(StickBreak {
        encoding: ResponseEncoding { y_tilde },
        outcomes,
        trials,
    })
}

/// Enumeration of the time- and history-specific cutpoints.
///
/// The first `K - 1` slots belong to `t = 1`. Each later time point owns
/// `K + 1` blocks of `K - 1` slots, one per previous response (none first,
/// then `1..=K`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutpointLayout {
    n_categories: usize,
    n_times: usize,
}

impl CutpointLayout {
    pub fn new(n_categories: usize, n_times: usize) -> Result<Self> {
        if n_categories < 2 || n_times == 0 {
            return Err(Error::Cutpoint(format!(
                "layout needs K >= 2 and T >= 1, got K = {n_categories}, T = {n_times}"
            )));
        }
        Ok(Self {
            n_categories,
            n_times,
        })
    }

    pub fn cross_sectional(n_categories: usize) -> Result<Self> {
        Self::new(n_categories, 1)
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    /// `g = (K - 1) + (T - 1)(K + 1)(K - 1)`.
    pub fn count(&self) -> usize {
        let km1 = self.n_categories - 1;
        km1 + (self.n_times - 1) * (self.n_categories + 1) * km1
    }

    /// 1-based slot of the cutpoint for break `k` of a response at time `t`
    /// with the given previous response.
    pub fn index(&self, t: usize, prev: Option<usize>, k: usize) -> Result<usize> {
        let kk = self.n_categories;
        if k == 0 || k >= kk {
            return Err(Error::Cutpoint(format!("break {k} outside 1..{kk}")));
        }
        if t == 0 || t > self.n_times {
            return Err(Error::Cutpoint(format!("time {t} outside 1..={}", self.n_times)));
        }
        if let Some(p) = prev {
            if p == 0 || p > kk {
                return Err(Error::Cutpoint(format!("previous response {p} outside 1..={kk}")));
            }
        }
        match (t, prev) {
            (1, None) => Ok(k),
            (1, Some(p)) => Err(Error::Cutpoint(format!(
                "t = 1 has no previous response, got {p}"
            ))),
            (t, prev) => {
                let pos = prev.unwrap_or(0);
                Ok((kk - 1) + ((t - 2) * (kk + 1) + pos) * (kk - 1) + k)
            }
        }
    }

    /// Inverse of [`index`](Self::index).
    pub fn slot(&self, index: usize) -> Result<(usize, Option<usize>, usize)> {
        let km1 = self.n_categories - 1;
        if index == 0 || index > self.count() {
            return Err(Error::Cutpoint(format!(
                "slot {index} outside 1..={}",
                self.count()
            )));
        }
        if index <= km1 {
            return Ok((1, None, index));
        }
        let rest = index - km1 - 1;
        let k = rest % km1 + 1;
        let block = rest / km1;
        let t = block / (self.n_categories + 1) + 2;
        let pos = block % (self.n_categories + 1);
        Ok((t, (pos > 0).then_some(pos), k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(unit: &str, t: usize, y: usize) -> UnitRecord<f64> {
        UnitRecord {
            unit_id: unit.into(),
            t,
            area: 1,
            x: vec![],
            y,
            w: 1.0,
            prev: None,
        }
    }

    #[test]
    fn rescaling_examples() {
        assert_eq!(rescale_weights(&[2.0, 2.0, 4.0]).unwrap(), vec![0.75, 0.75, 1.5]);
        assert_eq!(rescale_weights(&[5.0, 5.0, 5.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(rescale_weights(&[1.0, 3.0]).unwrap(), vec![0.5, 1.5]);
        assert!(rescale_weights::<f64>(&[]).is_err());
        assert!(matches!(
            rescale_weights(&[1.0, 0.0]),
            Err(Error::Data { row: Some(2), .. })
        ));
        assert!(rescale_weights(&[1.0, -3.0]).is_err());
    }

    #[test]
    fn grouped_rescaling_is_per_group() {
        let w = [1.0, 3.0, 7.0, 7.0];
        let g = [1, 1, 2, 2];
        assert_eq!(rescale_weights_grouped(&w, &g).unwrap(), vec![0.5, 1.5, 1.0, 1.0]);
        assert!(matches!(
            rescale_weights_grouped(&[1.0, 2.0, -1.0], &[1, 2, 1]),
            Err(Error::Data { row: Some(3), .. })
        ));
        assert!(rescale_weights_grouped(&[1.0], &[1, 2]).is_err());
    }

    proptest! {
        #[test]
        fn rescaled_weights_sum_to_n(w in prop::collection::vec(1e-3f64..1e4, 1..200)) {
            let s: f64 = rescale_weights(&w).unwrap().iter().sum();
            let n = w.len() as f64;
            prop_assert!((s - n).abs() <= 1e-12 * n);
        }
    }

    #[test]
    fn stick_break_examples() {
        let s = stick_break(3, 4).unwrap();
        assert_eq!(s.n_rows(), 3);
        assert_eq!(&s.outcomes[..3], &[0, 0, 1]);
        assert_eq!(&s.trials[..3], &[1, 1, 1]);
        assert_eq!(s.encoding.y_tilde, vec![0, 0, 1, 0]);

        let s = stick_break(1, 4).unwrap();
        assert_eq!(s.n_rows(), 1);
        assert_eq!(s.outcomes[0], 1);
        assert_eq!(s.trials, vec![1, 0, 0]);

        let s = stick_break(4, 4).unwrap();
        assert_eq!(s.n_rows(), 3);
        assert_eq!(s.outcomes, vec![0, 0, 0]);
        assert_eq!(s.trials, vec![1, 1, 1]);

        assert!(stick_break(0, 4).is_err());
        assert!(stick_break(5, 4).is_err());
    }

    #[test]
    fn trials_follow_the_remaining_stick() {
        for k in 3..7 {
            for y in 1..=k {
                let s = stick_break(y, k).unwrap();
                let mut remaining = 1u8;
                for j in 0..k - 1 {
                    assert_eq!(s.trials[j], remaining);
                    remaining -= s.encoding.y_tilde[j];
                }
                assert_eq!(s.n_rows(), y.min(k - 1));
            }
        }
    }

    #[test]
    fn cutpoint_examples() {
        assert_eq!(CutpointLayout::new(4, 12).unwrap().count(), 168);
        let l = CutpointLayout::new(4, 3).unwrap();
        assert_eq!(l.index(1, None, 2).unwrap(), 2);
        assert_eq!(l.index(2, None, 1).unwrap(), 4);
        assert_eq!(l.index(2, Some(1), 1).unwrap(), 7);
        assert_eq!(l.index(3, Some(4), 3).unwrap(), l.count());
        assert!(l.index(1, Some(2), 1).is_err());
        assert!(l.index(2, Some(5), 1).is_err());
        assert!(l.index(4, None, 1).is_err());
        assert!(l.index(2, None, 4).is_err());
        assert_eq!(CutpointLayout::cross_sectional(4).unwrap().count(), 3);
    }

    proptest! {
        #[test]
        fn cutpoint_index_is_a_bijection(k in 2usize..7, t in 1usize..9) {
            let l = CutpointLayout::new(k, t).unwrap();
            let mut hit = vec![false; l.count()];
            for tt in 1..=t {
                let prevs: Vec<Option<usize>> = if tt == 1 {
                    vec![None]
                } else {
                    std::iter::once(None).chain((1..=k).map(Some)).collect()
                };
                for p in prevs {
                    for kk in 1..k {
                        let i = l.index(tt, p, kk).unwrap();
                        prop_assert!(!hit[i - 1]);
                        hit[i - 1] = true;
                        prop_assert_eq!(l.slot(i).unwrap(), (tt, p, kk));
                    }
                }
            }
            prop_assert!(hit.iter().all(|&h| h));
        }
    }

    #[test]
    fn prev_is_joined_from_the_previous_week() {
        let mut rs = vec![rec("a", 2, 3), rec("a", 3, 1), rec("b", 1, 2), rec("b", 3, 4)];
        derive_prev(&mut rs).unwrap();
        let prev: Vec<_> = rs.iter().map(|r| r.prev).collect();
        assert_eq!(prev, vec![None, Some(3), None, None]);

        let mut dup = vec![rec("a", 1, 1), rec("a", 1, 2)];
        assert!(matches!(
            derive_prev(&mut dup),
            Err(Error::Data { row: Some(2), .. })
        ));
    }
}
