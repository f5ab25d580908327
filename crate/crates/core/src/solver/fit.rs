use rayon::prelude::*;

use super::{fit_single_quantile, DesignMatrix};
use crate::diagnostics::{calibration_curve, grouped_calibration_error};
use crate::error::{Error, Result};
use crate::model::{FitDiagnostics, FittedQuantileModel, ModelSpec, QuantileFitInfo, IF_FLOOR};
use crate::record::Observation;

/// Fits every grid point of `spec`. Grid points are solved in parallel; each
/// solve depends only on its own `p`, so the result does not depend on the
/// thread count.
pub fn fit_grid<R: Observation + Sync>(data: &[R], spec: &ModelSpec) -> Result<FittedQuantileModel> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::DegenerateDesign("dataset is empty".into()));
    }
    if data.len() < spec.variant.columns() {
        return Err(Error::DegenerateDesign(format!(
            "{} records for {} coefficients",
            data.len(),
            spec.variant.columns()
        )));
    }
    let (design, dropped) = DesignMatrix::for_model(data, spec, true)?;
    design.check_rank()?;
    let names = design.column_names().to_vec();
    let col = |name: &str| names.iter().position(|n| n == name);
    let (i_if, i_c1) = (col("ln_impact_factor"), col("ln_c1_k0"));

    let solutions = spec
        .quantile_grid
        .points()
        .par_iter()
        .map(|&p| fit_single_quantile(&design, p).map_err(|e| e.at_quantile(p)))
        .collect::<Result<Vec<_>>>()?;

    let triples: Vec<(f64, f64, f64)> = solutions
        .iter()
        .map(|s| {
            let b = &s.coefficients;
            (b[0], i_if.map_or(0.0, |i| b[i]), i_c1.map_or(0.0, |i| b[i]))
        })
        .collect();
    let mut model = FittedQuantileModel::from_coefficients(spec.clone(), &triples)?;

    let calibration = calibration_curve(&model, data, "training")?;
    model.diagnostics = FitDiagnostics {
        n: data.len(),
        if_floor: IF_FLOOR,
        dropped_columns: dropped,
        per_quantile: solutions
            .iter()
            .zip(&calibration.points)
            .map(|(s, c)| QuantileFitInfo {
                p: c.p,
                loss: s.loss,
                coverage: c.f,
                zero_residuals: s.signs.zero,
                iterations: s.iterations,
            })
            .collect(),
    };
    Ok(model)
}

/// Criterion minimized by [`select_k0`] on the training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum K0Objective {
    /// `sum_p (f(p) - p)^2` over the whole dataset.
    Pooled,
    /// The same error within IF bucket by `c1` cells of at least
    /// `min_group_size` records, weighted by cell size.
    Grouped { min_group_size: usize },
}

impl Default for K0Objective {
    fn default() -> Self {
        K0Objective::Grouped { min_group_size: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct K0Selection {
    pub best_k0: f64,
    /// `(k0, objective)` for every candidate, in candidate order.
    pub objectives: Vec<(f64, f64)>,
    pub model: FittedQuantileModel,
}

/// 0.1, 0.2, ..., 2.0.
pub fn default_k0_candidates() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 10.0).collect()
}

/// Fits the grid for each candidate `k0` and keeps the one with the
/// smallest objective; ties go to the smaller `k0`. The `k0` of `spec` is
/// ignored.
pub fn select_k0<R: Observation + Sync>(
    data: &[R],
    spec: &ModelSpec,
    candidates: &[f64],
    objective: K0Objective,
) -> Result<K0Selection> {
    if candidates.is_empty() {
        return Err(Error::InvalidSpec("no k0 candidates".into()));
    }
    let mut objectives = Vec::with_capacity(candidates.len());
    let mut best: Option<(f64, f64, FittedQuantileModel)> = None;
    for &k0 in candidates {
        let spec = ModelSpec { k0, ..spec.clone() };
        let model = fit_grid(data, &spec)?;
        let value = match objective {
            K0Objective::Pooled => calibration_curve(&model, data, "training")?.sum_sq_error,
            K0Objective::Grouped { min_group_size } => {
                grouped_calibration_error(&model, data, min_group_size)?
            }
        };
        log::debug!("k0 = {k0}: objective {value:.6e}");
        objectives.push((k0, value));
        let better = match &best {
            None => true,
            Some((bk, bv, _)) => value < *bv || (value == *bv && k0 < *bk),
        };
        if better {
            best = Some((k0, value, model));
        }
    }
    let (best_k0, _, model) = best.expect("candidates are nonempty");
    Ok(K0Selection {
        best_k0,
        objectives,
        model,
    })
}
