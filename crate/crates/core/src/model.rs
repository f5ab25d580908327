//! Model variants, the quantile grid, fitted coefficients and prediction.
//!
//! A fitted model stores, for every probability `p` on its grid, the triple
//! `(C_p, beta_p, gamma_p)` of the log-linear quantile law
//!
//! ```text
//! ln q(p | IF, c1) = C_p + beta_p * ln(IF) + gamma_p * ln(c1 + k0)
//! ```
//!
//! Responses are modelled as `ln(c_future + response_offset)`, so the
//! offset is subtracted again after exponentiation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::normalize::NormalizationConstants;

/// Impact factors below this value enter the log model at this value.
pub const IF_FLOOR: f64 = 0.05;

/// Grid points closer than this are treated as the same probability.
const GRID_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "if")]
    IfOnly,
    #[serde(rename = "c1")]
    C1Only,
    #[serde(rename = "full")]
    Full,
}

impl Variant {
    pub fn uses_impact_factor(self) -> bool {
        matches!(self, Variant::IfOnly | Variant::Full)
    }

    pub fn uses_c1(self) -> bool {
        matches!(self, Variant::C1Only | Variant::Full)
    }

    /// Number of design columns including the intercept.
    pub fn columns(self) -> usize {
        1 + self.uses_impact_factor() as usize + self.uses_c1() as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::IfOnly => "if",
            Variant::C1Only => "c1",
            Variant::Full => "full",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "if" => Ok(Variant::IfOnly),
            "c1" => Ok(Variant::C1Only),
            "full" => Ok(Variant::Full),
            other => Err(Error::InvalidSpec(format!("unknown variant `{other}`"))),
        }
    }
}

/// Strictly increasing probabilities in (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileGrid(Vec<f64>);

impl QuantileGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSpec("quantile grid is empty".into()));
        }
        for &p in &points {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidProbability(p));
            }
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSpec(
                "quantile grid must be strictly increasing".into(),
            ));
        }
        Ok(QuantileGrid(points))
    }

    /// Evenly spaced points from `start` to `stop` inclusive. Points are
    /// rounded to 12 decimals so that e.g. 0.5 + 49 * 0.01 lands on 0.99.
    pub fn range(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(stop >= start) {
            return Err(Error::InvalidSpec(format!(
                "bad grid range {start}:{stop}:{step}"
            )));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        let points = (0..count)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect();
        QuantileGrid::new(points)
    }

    /// 0.50, 0.51, ..., 0.99.
    pub fn default_grid() -> Self {
        QuantileGrid::range(0.50, 0.99, 0.01).expect("static grid is valid")
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, p: f64) -> Option<usize> {
        self.0.iter().position(|&g| (g - p).abs() <= GRID_MATCH_TOL)
    }

    /// Nearest grid point to `p`, provided it lies within half the local
    /// grid spacing.
    pub fn nearest(&self, p: f64) -> Option<usize> {
        let (idx, gap) = self
            .0
            .iter()
            .enumerate()
            .map(|(i, &g)| (i, (g - p).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        let spacing = match self.0.len() {
            1 => 0.0,
            _ => {
                let left = idx.checked_sub(1).map(|j| self.0[idx] - self.0[j]);
                let right = self.0.get(idx + 1).map(|g| g - self.0[idx]);
                left.into_iter().chain(right).fold(f64::INFINITY, f64::min)
            }
        };
        (gap <= spacing / 2.0 + GRID_MATCH_TOL).then_some(idx)
    }
}

impl TryFrom<Vec<f64>> for QuantileGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        QuantileGrid::new(v)
    }
}

impl From<QuantileGrid> for Vec<f64> {
    fn from(g: QuantileGrid) -> Self {
        g.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub k0: f64,
    pub quantile_grid: QuantileGrid,
    pub response_offset: f64,
}

impl ModelSpec {
    pub fn new(variant: Variant, k0: f64) -> Result<Self> {
        let spec = ModelSpec {
            variant,
            k0,
            quantile_grid: QuantileGrid::default_grid(),
            response_offset: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_grid(mut self, grid: QuantileGrid) -> Self {
        self.quantile_grid = grid;
        self
    }

    pub fn with_response_offset(mut self, offset: f64) -> Result<Self> {
        self.response_offset = offset;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k0 > 0.0 && self.k0.is_finite()) {
            return Err(Error::InvalidSpec(format!("k0 must be positive, got {}", self.k0)));
        }
        if !(self.response_offset > 0.0 && self.response_offset.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "response offset must be positive, got {}",
                self.response_offset
            )));
        }
        Ok(())
    }

    /// The covariate part of the linear predictor, without the intercept:
    /// `(ln(IF v floor), ln(c1 + k0))`, each present only when the variant
    /// uses it.
    pub fn log_covariates(&self, impact_factor: f64, c1: f64) -> (Option<f64>, Option<f64>) {
        let lif = self
            .variant
            .uses_impact_factor()
            .then(|| impact_factor.max(IF_FLOOR).ln());
        let lc1 = self.variant.uses_c1().then(|| (c1 + self.k0).ln());
        (lif, lc1)
    }

    pub fn response(&self, c_future: f64) -> f64 {
        (c_future + self.response_offset).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileCoefficients {
    pub p: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFitInfo {
    pub p: f64,
    /// Pinball loss at the solution.
    pub loss: f64,
    /// Share of training records strictly below their predicted quantile.
    pub coverage: f64,
    /// Residuals that are zero within solver tolerance.
    pub zero_residuals: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FitDiagnostics {
    pub n: usize,
    pub if_floor: f64,
    /// Covariate columns dropped as constant; their coefficients are 0.
    pub dropped_columns: Vec<String>,
    pub per_quantile: Vec<QuantileFitInfo>,
}

impl FitDiagnostics {
    /// Largest zero-residual count over the grid.
    pub fn max_zero_residuals(&self) -> usize {
        self.per_quantile
            .iter()
            .map(|q| q.zero_residuals)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedQuantileModel {
    pub spec: ModelSpec,
    pub coefficients: Vec<QuantileCoefficients>,
    pub normalization: Option<NormalizationConstants>,
    pub diagnostics: FitDiagnostics,
}

impl FittedQuantileModel {
    /// Builds a model from one `(C, beta, gamma)` triple per grid point.
    /// Coefficients of covariates the variant does not use are forced to 0.
    pub fn from_coefficients(spec: ModelSpec, triples: &[(f64, f64, f64)]) -> Result<Self> {
        spec.validate()?;
        if triples.len() != spec.quantile_grid.len() {
            return Err(Error::InvalidSpec(format!(
                "{} coefficient triples for a grid of {}",
                triples.len(),
                spec.quantile_grid.len()
            )));
        }
        let coefficients = spec
            .quantile_grid
            .points()
            .iter()
            .zip(triples)
            .map(|(&p, &(c, beta, gamma))| QuantileCoefficients {
                p,
                c,
                beta: if spec.variant.uses_impact_factor() { beta } else { 0.0 },
                gamma: if spec.variant.uses_c1() { gamma } else { 0.0 },
            })
            .collect();
        Ok(FittedQuantileModel {
            spec,
            coefficients,
            normalization: None,
            diagnostics: FitDiagnostics {
                if_floor: IF_FLOOR,
                ..Default::default()
            },
        })
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.spec.quantile_grid
    }

    pub fn coefficients_at(&self, p: f64) -> Result<&QuantileCoefficients> {
        self.grid()
            .index_of(p)
            .map(|i| &self.coefficients[i])
            .ok_or(Error::UnknownQuantile(p))
    }

    /// `C_p + beta_p ln(IF) + gamma_p ln(c1 + k0)` at grid index `idx`.
    fn linear_predictor(&self, idx: usize, impact_factor: f64, c1: f64) -> f64 {
        let coef = &self.coefficients[idx];
        let (lif, lc1) = self.spec.log_covariates(impact_factor, c1);
        coef.c + lif.map_or(0.0, |v| coef.beta * v) + lc1.map_or(0.0, |v| coef.gamma * v)
    }

    /// The multiplicative quantile `exp(linear predictor)`, before the
    /// response offset is removed.
    pub fn raw_quantile(&self, p: f64, impact_factor: f64, c1: f64) -> Result<f64> {
        check_covariates(impact_factor, c1)?;
        let idx = self.grid().index_of(p).ok_or(Error::UnknownQuantile(p))?;
        Ok(self.linear_predictor(idx, impact_factor, c1).exp())
    }

    /// Predicted citation count at quantile `p`.
    pub fn predict_quantile(&self, p: f64, impact_factor: f64, c1: f64) -> Result<f64> {
        let raw = self.raw_quantile(p, impact_factor, c1)?;
        Ok((raw - self.spec.response_offset).max(0.0))
    }

    /// `(predicted count, p)` for each grid point, monotonized by a running
    /// maximum over increasing `p`.
    pub fn predict_conditional_cdf(&self, impact_factor: f64, c1: f64) -> Result<Vec<(f64, f64)>> {
        check_covariates(impact_factor, c1)?;
        let mut running = f64::NEG_INFINITY;
        Ok(self
            .grid()
            .points()
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let q = (self.linear_predictor(i, impact_factor, c1).exp()
                    - self.spec.response_offset)
                    .max(0.0);
                running = running.max(q);
                (running, p)
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        json::to_string_exact(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: FittedQuantileModel = serde_json::from_str(s)?;
        model.spec.validate()?;
        let grid_matches = model.coefficients.len() == model.grid().len()
            && model
                .coefficients
                .iter()
                .zip(model.grid().points())
                .all(|(c, &p)| (c.p - p).abs() <= GRID_MATCH_TOL);
        if !grid_matches {
            return Err(Error::InvalidSpec(
                "model coefficients do not cover the quantile grid".into(),
            ));
        }
        Ok(model)
    }
}

pub(crate) fn check_covariates(impact_factor: f64, c1: f64) -> Result<()> {
    if !impact_factor.is_finite() || impact_factor < 0.0 {
        return Err(Error::InvalidCovariate(format!("impact factor {impact_factor}")));
    }
    if !c1.is_finite() || c1 < 0.0 {
        return Err(Error::InvalidCovariate(format!("c1 {c1}")));
    }
    Ok(())
}
