//! Cohort mean normalization.
//!
//! Citation counts inflate over time, so a model fitted on an older cohort
//! under-predicts a newer one. Dividing `c1`, the impact factor and
//! `c_future` by their cohort means puts both cohorts on the same scale; a
//! prediction of 2.0 then means twice the cohort's mean future citations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FittedQuantileModel, ModelSpec};
use crate::record::{Observation, ScaledRecord};
use crate::solver::fit_grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConstants {
    pub mean_c1: f64,
    pub mean_if: f64,
    pub mean_c_future: f64,
    pub cohort_label: String,
    /// When false the impact factor is left in its raw units.
    pub normalize_if: bool,
}

impl NormalizationConstants {
    /// Keeps the impact factor unnormalized.
    pub fn exempt_impact_factor(mut self) -> Self {
        self.normalize_if = false;
        self
    }

    fn if_divisor(&self) -> f64 {
        if self.normalize_if {
            self.mean_if
        } else {
            1.0
        }
    }

    pub fn normalize_covariates(&self, impact_factor: f64, c1: f64) -> (f64, f64) {
        (impact_factor / self.if_divisor(), c1 / self.mean_c1)
    }

    /// Converts a normalized quantile back to citations of this cohort.
    pub fn to_citations(&self, normalized: f64) -> f64 {
        normalized * self.mean_c_future
    }
}

pub fn compute_constants<R: Observation>(data: &[R], label: &str) -> Result<NormalizationConstants> {
    if data.is_empty() {
        return Err(Error::InvalidSpec("cannot normalize an empty dataset".into()));
    }
    let n = data.len() as f64;
    let (mut s_c1, mut s_if, mut s_cf) = (0.0, 0.0, 0.0);
    for r in data {
        s_c1 += r.c1();
        s_if += r.impact_factor();
        s_cf += r.c_future();
    }
    let (mean_c1, mean_if, mean_c_future) = (s_c1 / n, s_if / n, s_cf / n);
    for (name, m) in [("c1", mean_c1), ("impact_factor", mean_if), ("c_future", mean_c_future)] {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::ZeroMeanColumn(name));
        }
    }
    Ok(NormalizationConstants {
        mean_c1,
        mean_if,
        mean_c_future,
        cohort_label: label.to_string(),
        normalize_if: true,
    })
}

pub fn normalize_dataset<R: Observation>(
    data: &[R],
    constants: &NormalizationConstants,
) -> Vec<ScaledRecord> {
    data.iter()
        .map(|r| {
            let (impact_factor, c1) = constants.normalize_covariates(r.impact_factor(), r.c1());
            ScaledRecord {
                id: r.id().to_string(),
                impact_factor,
                c1,
                c_future: r.c_future() / constants.mean_c_future,
            }
        })
        .collect()
}

/// Computes cohort constants, normalizes and fits; the constants are stored
/// in the returned model.
pub fn fit_normalized<R: Observation + Sync>(
    data: &[R],
    spec: &ModelSpec,
    label: &str,
    normalize_if: bool,
) -> Result<FittedQuantileModel> {
    let mut constants = compute_constants(data, label)?;
    if !normalize_if {
        constants = constants.exempt_impact_factor();
    }
    let scaled = normalize_dataset(data, &constants);
    let mut model = fit_grid(&scaled, spec)?;
    model.normalization = Some(constants);
    Ok(model)
}

/// Predicted `p`-quantile for a publication of cohort B, in units of B's mean
/// future citations. The model must have been fitted on normalized data.
pub fn transfer_predict(
    model: &FittedQuantileModel,
    target: &NormalizationConstants,
    p: f64,
    impact_factor: f64,
    c1: f64,
) -> Result<f64> {
    let source = model
        .normalization
        .as_ref()
        .ok_or(Error::MissingNormalization)?;
    // The query is normalized the same way the training cohort was.
    let target = NormalizationConstants {
        normalize_if: source.normalize_if,
        ..target.clone()
    };
    let (nif, nc1) = target.normalize_covariates(impact_factor, c1);
    model.predict_quantile(p, nif, nc1)
}
