//! Pareto-tail estimation: the Hill estimator, AMSE-based threshold choice,
//! tail quantile extrapolation and its link to the regression coefficients.
//!
//! Order statistics are indexed from the top: in a descending sample `x`,
//! `x[0]` is the maximum and `x[k]` is the threshold `X_(n-k,n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FittedQuantileModel;
use crate::record::Observation;
use crate::solver::check_probability;

/// Second-order parameter of the bias model used in threshold selection.
const RHO: f64 = -1.0;

/// Finite values sorted in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct DescendingSample(Vec<f64>);

impl DescendingSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateSample("non-finite value".into()));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(DescendingSample(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check_positive_through(&self, k: usize) -> Result<()> {
        let v = self.0[k];
        if v > 0.0 {
            Ok(())
        } else {
            Err(Error::NonPositiveSample { rank: k, value: v })
        }
    }
}

/// Hill estimate of `gamma = 1 / alpha` from the top `k` log-excesses over
/// the `(k+1)`-th largest value.
pub fn hill_estimate(sample: &DescendingSample, k: usize) -> Result<f64> {
    let n = sample.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidThreshold { k, n });
    }
    sample.check_positive_through(k)?;
    let x = sample.as_slice();
    let base = x[k].ln();
    Ok(x[..k].iter().map(|v| v.ln() - base).sum::<f64>() / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub alpha: f64,
    #[serde(rename = "gamma")]
    pub gamma_hill: f64,
    pub k: usize,
    pub n: usize,
    pub p_star: f64,
    pub threshold_value: f64,
    #[serde(skip_serializing, default)]
    pub amse_proxy: f64,
}

impl TailEstimate {
    /// Estimate at a fixed threshold order `k`.
    pub fn at_k(sample: &DescendingSample, k: usize) -> Result<Self> {
        let scan = hill_scan(sample, k, k)?;
        Ok(TailEstimate::from_row(sample, &scan[0]))
    }

    fn from_row(sample: &DescendingSample, row: &HillScanRow) -> Self {
        let n = sample.len();
        TailEstimate {
            alpha: 1.0 / row.gamma_hat,
            gamma_hill: row.gamma_hat,
            k: row.k,
            n,
            p_star: 1.0 - row.k as f64 / n as f64,
            threshold_value: sample.as_slice()[row.k],
            amse_proxy: row.amse_proxy,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        crate::json::to_string_exact(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillScanRow {
    pub k: usize,
    pub gamma_hat: f64,
    pub amse_proxy: f64,
}

/// `(10, floor(n / 4))`.
pub fn default_k_range(n: usize) -> (usize, usize) {
    (10, n / 4)
}

/// Hill estimates and AMSE proxies for every `k` in `k_min..=k_max`.
///
/// The bias is estimated from the scaled log-spacings
/// `Z_j = j (ln x[j-1] - ln x[j])`, regressed by least squares on
/// `gamma + b (j / (k+1))^(-rho)` with `rho = -1`; the proxy is
/// `gamma^2 / k + (b / (1 - rho))^2`. All sums come from prefix sums, so the
/// scan is linear in `k_max`.
pub fn hill_scan(sample: &DescendingSample, k_min: usize, k_max: usize) -> Result<Vec<HillScanRow>> {
    let n = sample.len();
    if k_min == 0 || k_min > k_max || k_max >= n {
        return Err(Error::InvalidThreshold { k: k_max.max(k_min), n });
    }
    sample.check_positive_through(k_max)?;
    let logs: Vec<f64> = sample.as_slice()[..=k_max].iter().map(|v| v.ln()).collect();

    // log_prefix[k] = sum_{i<k} ln x[i];  weighted[k] = sum_{j<=k} j^2 (ln x[j-1] - ln x[j])
    let mut log_prefix = vec![0.0; k_max + 1];
    let mut weighted = vec![0.0; k_max + 1];
    for k in 1..=k_max {
        log_prefix[k] = log_prefix[k - 1] + logs[k - 1];
        let j = k as f64;
        weighted[k] = weighted[k - 1] + j * j * (logs[k - 1] - logs[k]);
    }

    Ok((k_min..=k_max)
        .map(|k| {
            let kf = k as f64;
            let sum_z = log_prefix[k] - kf * logs[k];
            let gamma_hat = sum_z / kf;
            let amse_proxy = if k >= 2 {
                let sum_tz = weighted[k] / (kf + 1.0);
                let sxx = kf * (2.0 * kf + 1.0) / (6.0 * (kf + 1.0)) - kf / 4.0;
                let sxz = sum_tz - 0.5 * sum_z;
                let b = sxz / sxx;
                gamma_hat * gamma_hat / kf + (b / (1.0 - RHO)).powi(2)
            } else {
                f64::INFINITY
            };
            HillScanRow { k, gamma_hat, amse_proxy }
        })
        .collect())
}

/// The estimate at the `k` minimizing the AMSE proxy; ties go to the smaller `k`.
pub fn select_threshold(sample: &DescendingSample, k_min: usize, k_max: usize) -> Result<TailEstimate> {
    if k_min < 2 {
        return Err(Error::InvalidThreshold { k: k_min, n: sample.len() });
    }
    let scan = hill_scan(sample, k_min, k_max)?;
    let best = scan
        .iter()
        .min_by(|a, b| a.amse_proxy.total_cmp(&b.amse_proxy).then(a.k.cmp(&b.k)))
        .expect("scan range is nonempty");
    if !(best.gamma_hat > 0.0) {
        return Err(Error::DegenerateSample(format!("Hill estimate {} at k = {}", best.gamma_hat, best.k)));
    }
    Ok(TailEstimate::from_row(sample, best))
}

/// `X_(n-k,n) (k / (n (1 - p)))^(1 / alpha)` for `p >= p*`.
pub fn pareto_quantile(estimate: &TailEstimate, p: f64) -> Result<f64> {
    check_probability(p)?;
    if p < estimate.p_star {
        return Err(Error::BelowThreshold { p, p_star: estimate.p_star });
    }
    if p == estimate.p_star {
        return Ok(estimate.threshold_value);
    }
    let ratio = estimate.k as f64 / (estimate.n as f64 * (1.0 - p));
    Ok(estimate.threshold_value * ratio.powf(1.0 / estimate.alpha))
}

/// Tail quantile anchored at the regression's prediction for `p*`:
/// `((1 - p*) / (1 - p))^(1/alpha) * q(p* | IF, c1)`, where `q` is the
/// multiplicative quantile before the response offset; the offset is removed
/// only from the final value.
pub fn hybrid_quantile(
    model: &FittedQuantileModel,
    estimate: &TailEstimate,
    p: f64,
    impact_factor: f64,
    c1: f64,
) -> Result<f64> {
    check_probability(p)?;
    let p_star = estimate.p_star;
    if p < p_star {
        return Err(Error::BelowThreshold { p, p_star });
    }
    let idx = model.grid().nearest(p_star).ok_or(Error::UnknownQuantile(p_star))?;
    let anchor_p = model.grid().points()[idx];
    let anchor = model.raw_quantile(anchor_p, impact_factor, c1)?;
    let factor = ((1.0 - p_star) / (1.0 - p)).powf(1.0 / estimate.alpha);
    Ok((factor * anchor - model.spec.response_offset).max(0.0))
}

/// `C_p* + (ln(1 - p*) - ln(1 - p)) / alpha`, the regression intercept implied
/// by a Pareto tail with exponent `alpha` above `p*`.
pub fn c_p_proxy(c_pstar: f64, p_star: f64, alpha: f64, p: f64) -> Result<f64> {
    check_probability(p)?;
    check_probability(p_star)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidSpec(format!("tail exponent must be positive, got {alpha}")));
    }
    Ok(c_pstar + ((1.0 - p_star).ln() - (1.0 - p).ln()) / alpha)
}

/// Outcomes rescaled to the reference covariate level of the model at `p`:
/// `(c_future + offset) / exp(beta_p ln IF + gamma_p ln(c1 + k0))`. Under the
/// log-linear law with covariate effects constant in the tail, this sample's
/// `p`-quantile is `exp(C_p)` and its tail carries the common exponent.
pub fn covariate_adjusted_sample<R: Observation>(
    model: &FittedQuantileModel,
    data: &[R],
    p: f64,
) -> Result<Vec<f64>> {
    let c = model.coefficients_at(p)?.c;
    data.iter()
        .map(|r| {
            let q = model.raw_quantile(p, r.impact_factor(), r.c1())?;
            let covariate_factor = q / c.exp();
            Ok((r.c_future() + model.spec.response_offset) / covariate_factor)
        })
        .collect()
}
