//! Fit and tail diagnostics as plot-ready tables: Zenga curves, calibration
//! curves, grouped predicted-vs-empirical quantiles and coverage heatmaps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FittedQuantileModel;
use crate::record::Observation;

/// Empirical quantile `inf { y : F(y) >= p }` of an ascending sample.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let n = sorted.len();
    // smallest i with i / n >= p
    let i = ((p * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Some(sorted[i.min(n) - 1])
}

/// 0.01, 0.02, ..., 0.99.
pub fn default_zenga_grid() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

/// `Z(u) = 1 - Q-(u) / Q+(u)` where `Q-` and `Q+` are the means of the
/// empirical quantile function below and above `u`. Observations straddling
/// `u` are split proportionally, so both are exact integrals of `F^-1`.
pub fn zenga_curve(sample: &[f64], grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if sample.is_empty() {
        return Err(Error::DegenerateSample("empty sample".into()));
    }
    if sample.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::DegenerateSample("values must be finite and nonnegative".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let nf = n as f64;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &v in &sorted {
        prefix.push(prefix.last().unwrap() + v);
    }
    let total = prefix[n] / nf;
    if !(total > 0.0) {
        return Err(Error::DegenerateSample("sample mean is zero".into()));
    }
    if sorted[0] == sorted[n - 1] {
        return grid
            .iter()
            .map(|&u| {
                if u > 0.0 && u < 1.0 {
                    Ok((u, 0.0))
                } else {
                    Err(Error::InvalidProbability(u))
                }
            })
            .collect();
    }
    grid.iter()
        .map(|&u| {
            if !(u > 0.0 && u < 1.0) {
                return Err(Error::InvalidProbability(u));
            }
            let pos = u * nf;
            let m = (pos.floor() as usize).min(n - 1);
            let lower = (prefix[m] + (pos - m as f64) * sorted[m]) / nf;
            let q_minus = lower / u;
            let q_plus = (total - lower) / (1.0 - u);
            if !(q_plus > 0.0) {
                return Err(Error::DegenerateSample(format!("upper mean vanishes at u = {u}")));
            }
            Ok((u, 1.0 - q_minus / q_plus))
        })
        .collect()
}

/// Default tolerance of [`upper_half_convex`].
pub const CONVEXITY_TOL: f64 = 1e-3;

/// True when the second differences of `Z` over the upper half of the grid
/// are all at least `-tol`. A Pareto tail gives a convex increasing curve.
pub fn upper_half_convex(curve: &[(f64, f64)], tol: f64) -> bool {
    let upper = &curve[curve.len() / 2..];
    upper.windows(3).all(|w| w[2].1 - 2.0 * w[1].1 + w[0].1 >= -tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub p: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub points: Vec<CalibrationPoint>,
    pub sum_sq_error: f64,
    pub dataset_label: String,
}

impl CalibrationReport {
    pub fn max_abs_error(&self) -> f64 {
        self.points.iter().map(|c| (c.f - c.p).abs()).fold(0.0, f64::max)
    }

    pub fn at(&self, p: f64) -> Option<f64> {
        self.points.iter().find(|c| (c.p - p).abs() < 1e-12).map(|c| c.f)
    }
}

/// Share of records whose outcome lies strictly below the prediction.
fn coverage<R: Observation>(model: &FittedQuantileModel, data: &[R], p: f64) -> Result<f64> {
    let mut below = 0usize;
    for r in data {
        if r.c_future() < model.predict_quantile(p, r.impact_factor(), r.c1())? {
            below += 1;
        }
    }
    Ok(below as f64 / data.len() as f64)
}

pub fn calibration_curve<R: Observation>(
    model: &FittedQuantileModel,
    data: &[R],
    label: &str,
) -> Result<CalibrationReport> {
    if data.is_empty() {
        return Err(Error::InvalidSpec("calibration needs a nonempty dataset".into()));
    }
    let points = model
        .grid()
        .points()
        .iter()
        .map(|&p| Ok(CalibrationPoint { p, f: coverage(model, data, p)? }))
        .collect::<Result<Vec<_>>>()?;
    let sum_sq_error = points.iter().map(|c| (c.f - c.p).powi(2)).sum();
    Ok(CalibrationReport {
        points,
        sum_sq_error,
        dataset_label: label.to_string(),
    })
}

pub fn if_bucket(impact_factor: f64) -> f64 {
    (impact_factor * 2.0).round() / 2.0
}

/// Publications sharing an impact-factor bucket (nearest 0.5) and `c1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicationGroup {
    pub if_bucket: f64,
    pub c1: f64,
    pub members: Vec<String>,
    /// Positions of the members in the dataset that was grouped.
    pub indices: Vec<usize>,
    pub size: usize,
}

/// Orders by (bucket, c1); both are nonnegative so the bit patterns of the
/// c1 values sort numerically.
fn cells<R: Observation>(data: &[R]) -> BTreeMap<(i64, u64), Vec<usize>> {
    let mut map: BTreeMap<(i64, u64), Vec<usize>> = BTreeMap::new();
    for (i, r) in data.iter().enumerate() {
        let key = (
            (if_bucket(r.impact_factor()) * 2.0) as i64,
            (r.c1() + 0.0).to_bits(),
        );
        map.entry(key).or_default().push(i);
    }
    map
}

pub fn group_records<R: Observation>(data: &[R], min_size: usize) -> Vec<PublicationGroup> {
    let min_size = min_size.max(1);
    cells(data)
        .into_iter()
        .filter(|(_, idx)| idx.len() >= min_size)
        .map(|((half, c1bits), indices)| PublicationGroup {
            if_bucket: half as f64 / 2.0,
            c1: f64::from_bits(c1bits),
            members: indices.iter().map(|&i| data[i].id().to_string()).collect(),
            size: indices.len(),
            indices,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub if_bucket: f64,
    pub c1: f64,
    pub size: usize,
    pub predicted_q: f64,
    pub empirical_q: f64,
}

/// Predicted quantile at the group's bucket against the empirical quantile
/// of its members' outcomes. `groups` must come from `group_records(data)`.
pub fn group_quantile_comparison<R: Observation>(
    model: &FittedQuantileModel,
    data: &[R],
    groups: &[PublicationGroup],
    p: f64,
) -> Result<Vec<GroupComparison>> {
    groups
        .iter()
        .map(|g| {
            let mut outcomes: Vec<f64> = g.indices.iter().map(|&i| data[i].c_future()).collect();
            outcomes.sort_by(f64::total_cmp);
            Ok(GroupComparison {
                if_bucket: g.if_bucket,
                c1: g.c1,
                size: g.size,
                predicted_q: model.predict_quantile(p, g.if_bucket, g.c1)?,
                empirical_q: empirical_quantile(&outcomes, p)
                    .ok_or_else(|| Error::DegenerateSample("empty group".into()))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub if_bucket: f64,
    pub c1: f64,
    pub size: usize,
    /// Within-cell coverage minus `p`.
    pub delta: f64,
}

/// Per-cell `f - p`, where `f` uses each record's own covariates.
pub fn coverage_heatmap<R: Observation>(
    model: &FittedQuantileModel,
    data: &[R],
    p: f64,
) -> Result<Vec<HeatmapCell>> {
    model.coefficients_at(p)?;
    cells(data)
        .into_iter()
        .map(|((half, c1bits), idx)| {
            let members: Vec<&R> = idx.iter().map(|&i| &data[i]).collect();
            let mut below = 0usize;
            for r in &members {
                if r.c_future() < model.predict_quantile(p, r.impact_factor(), r.c1())? {
                    below += 1;
                }
            }
            Ok(HeatmapCell {
                if_bucket: half as f64 / 2.0,
                c1: f64::from_bits(c1bits),
                size: idx.len(),
                delta: below as f64 / idx.len() as f64 - p,
            })
        })
        .collect()
}

/// Size-weighted squared coverage error over cells of at least `min_size`
/// records, summed over the model grid:
/// `sum_p sum_g (n_g / n) (f_g(p) - p)^2`.
///
/// Unlike the pooled calibration error this penalizes a model that is
/// right on average but wrong within covariate cells.
pub fn grouped_calibration_error<R: Observation>(
    model: &FittedQuantileModel,
    data: &[R],
    min_size: usize,
) -> Result<f64> {
    let groups = group_records(data, min_size);
    let retained: usize = groups.iter().map(|g| g.size).sum();
    if retained == 0 {
        return Err(Error::DegenerateSample(format!(
            "no covariate cell has at least {min_size} records"
        )));
    }
    let mut total = 0.0;
    for &p in model.grid().points() {
        for g in &groups {
            let mut below = 0usize;
            for &i in &g.indices {
                let r = &data[i];
                if r.c_future() < model.predict_quantile(p, r.impact_factor(), r.c1())? {
                    below += 1;
                }
            }
            let f = below as f64 / g.size as f64;
            total += g.size as f64 / retained as f64 * (f - p).powi(2);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelSpec, QuantileGrid, Variant};
    use crate::record::{PublicationRecord, ScaledRecord};

    fn rec(id: usize, impact_factor: f64, c1: u64, c_future: u64) -> PublicationRecord {
        PublicationRecord {
            id: format!("r{id}"),
            cohort_year: 1990,
            impact_factor,
            c1,
            c_future,
        }
    }

    #[test]
    fn inf_quantile_convention() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&v, 0.8), Some(8.0));
        assert_eq!(empirical_quantile(&v, 0.81), Some(9.0));
        assert_eq!(empirical_quantile(&v, 0.05), Some(1.0));
        assert_eq!(empirical_quantile(&v, 1.0), Some(10.0));
        assert_eq!(empirical_quantile(&[4.0; 7], 0.3), Some(4.0));
    }

    #[test]
    fn zenga_constant_and_two_point() {
        let z = zenga_curve(&[3.0; 17], &default_zenga_grid()).unwrap();
        assert!(z.iter().all(|&(_, v)| v == 0.0));
        let z = zenga_curve(&[1.0, 3.0], &[0.5]).unwrap();
        assert!((z[0].1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zenga_fractional_split() {
        // u = 0.25 on {1, 3}: lower mean 1, upper mean (0.25 * 1 + 0.5 * 3) / 0.75.
        let z = zenga_curve(&[3.0, 1.0], &[0.25]).unwrap();
        let q_plus = (0.25 + 1.5) / 0.75;
        assert!((z[0].1 - (1.0 - 1.0 / q_plus)).abs() < 1e-15);
    }

    #[test]
    fn zenga_errors() {
        assert!(matches!(zenga_curve(&[], &[0.5]), Err(Error::DegenerateSample(_))));
        assert!(matches!(zenga_curve(&[0.0, 0.0], &[0.5]), Err(Error::DegenerateSample(_))));
        assert!(matches!(zenga_curve(&[1.0], &[1.0]), Err(Error::InvalidProbability(_))));
    }

    #[test]
    fn grouping_rounds_to_halves() {
        let data = [rec(0, 2.4, 1, 5), rec(1, 2.6, 1, 6), rec(2, 2.6, 2, 6)];
        let g = group_records(&data, 1);
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].if_bucket, g[0].c1, g[0].size), (2.5, 1.0, 2));
        assert_eq!(g[0].members, vec!["r0", "r1"]);
        assert_eq!(group_records(&data, 2).len(), 1);
        assert!(group_records::<PublicationRecord>(&[], 1).is_empty());
    }

    fn constant_model(grid: Vec<f64>, c: f64) -> FittedQuantileModel {
        let spec = ModelSpec::new(Variant::Full, 0.5)
            .unwrap()
            .with_grid(QuantileGrid::new(grid.clone()).unwrap());
        FittedQuantileModel::from_coefficients(spec, &vec![(c, 0.0, 0.0); grid.len()]).unwrap()
    }

    #[test]
    fn huge_predictions_cover_everything() {
        let data: Vec<_> = (0..30).map(|i| rec(i, 1.0 + i as f64, i as u64 % 3, i as u64 * 10)).collect();
        let m = constant_model(vec![0.5, 0.7, 0.9], 50.0);
        let rep = calibration_curve(&m, &data, "t").unwrap();
        assert!(rep.points.iter().all(|c| c.f == 1.0));
    }

    #[test]
    fn group_comparison_values() {
        let data: Vec<_> = (1..=10).map(|i| rec(i, 1.0, 0, i as u64)).collect();
        let groups = group_records(&data, 1);
        let m = constant_model(vec![0.8], 0.0);
        let cmp = group_quantile_comparison(&m, &data, &groups, 0.8).unwrap();
        assert_eq!(cmp.len(), 1);
        assert_eq!(cmp[0].empirical_q, 8.0);
        assert_eq!(cmp[0].predicted_q, 0.0);
        assert!(group_quantile_comparison(&m, &data, &groups, 0.5).is_err());

        let flat: Vec<_> = (0..9).map(|i| rec(i, 3.0, 2, 4)).collect();
        let g = group_records(&flat, 1);
        let cmp = group_quantile_comparison(&m, &flat, &g, 0.8).unwrap();
        assert_eq!(cmp[0].empirical_q, 4.0);
    }

    #[test]
    fn single_cell_heatmap() {
        // exp(ln 4.5) - 1 = 3.5: outcomes {1, 3, 4, 9} -> two strictly below.
        let data: Vec<_> = [1, 3, 4, 9].iter().enumerate().map(|(i, &c)| rec(i, 2.0, 1, c)).collect();
        let m = constant_model(vec![0.5], 4.5f64.ln());
        let h = coverage_heatmap(&m, &data, 0.5).unwrap();
        assert_eq!(h.len(), 1);
        assert!((h[0].delta - (0.5 - 0.5)).abs() < 1e-15);
        let m = constant_model(vec![0.5], 9.5f64.ln());
        let h = coverage_heatmap(&m, &data, 0.5).unwrap();
        assert!((h[0].delta - 0.25).abs() < 1e-15);
    }

    #[test]
    fn scaled_records_group_by_exact_c1() {
        let data = vec![
            ScaledRecord { id: "a".into(), impact_factor: 1.0, c1: 0.5, c_future: 1.0 },
            ScaledRecord { id: "b".into(), impact_factor: 1.1, c1: 0.5, c_future: 1.0 },
            ScaledRecord { id: "c".into(), impact_factor: 1.1, c1: 0.25, c_future: 1.0 },
        ];
        let g = group_records(&data, 1);
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].c1, 0.25);
        assert_eq!(g[1].size, 2);
    }
}
