//! Pinball-loss minimization.
//!
//! For a probability `p`, the check function is `rho_p(z) = p z` for
//! `z >= 0` and `(p - 1) z` for `z < 0`; minimizing `sum rho_p(y_i - x_i b)`
//! over `b` is a linear program solved exactly in [`simplex`].

mod fit;
mod simplex;

use nalgebra::DMatrix;

pub use fit::{default_k0_candidates, fit_grid, select_k0, K0Objective, K0Selection};
pub use simplex::SolverOptions;

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::record::Observation;

/// Absolute tolerance, relative to the response magnitude, under which a
/// residual counts as zero.
pub const ZERO_RESIDUAL_TOL: f64 = 1e-9;

pub fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

pub fn rho(p: f64, z: f64) -> f64 {
    if z >= 0.0 {
        z * p
    } else {
        z * (p - 1.0)
    }
}

pub fn pinball_loss(p: f64, residuals: &[f64]) -> Result<f64> {
    check_probability(p)?;
    Ok(residuals.iter().map(|&z| rho(p, z)).sum())
}

/// Row-major design with its response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    data: Vec<f64>,
    response: Vec<f64>,
    names: Vec<String>,
    ncols: usize,
}

impl DesignMatrix {
    /// Builds a design from named columns. No intercept is added.
    pub fn from_columns(columns: Vec<(String, Vec<f64>)>, response: Vec<f64>) -> Result<Self> {
        let n = response.len();
        if columns.is_empty() {
            return Err(Error::DegenerateDesign("design has no columns".into()));
        }
        if columns.iter().any(|(_, c)| c.len() != n) {
            return Err(Error::InvalidSpec("column lengths differ from response".into()));
        }
        let ncols = columns.len();
        let mut data = Vec::with_capacity(n * ncols);
        for i in 0..n {
            data.extend(columns.iter().map(|(_, c)| c[i]));
        }
        if data.iter().chain(&response).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariate("non-finite design entry".into()));
        }
        Ok(DesignMatrix {
            data,
            response,
            names: columns.into_iter().map(|(name, _)| name).collect(),
            ncols,
        })
    }

    /// Intercept plus the log covariates used by `spec.variant`; constant
    /// covariates are left out when `drop_constant` is set. Returns the
    /// names of the dropped columns alongside the design.
    pub fn for_model<R: Observation>(
        data: &[R],
        spec: &ModelSpec,
        drop_constant: bool,
    ) -> Result<(Self, Vec<String>)> {
        let mut columns = vec![("intercept".to_string(), vec![1.0; data.len()])];
        let mut lif = Vec::new();
        let mut lc1 = Vec::new();
        for r in data {
            crate::model::check_covariates(r.impact_factor(), r.c1())?;
            let (a, b) = spec.log_covariates(r.impact_factor(), r.c1());
            lif.extend(a);
            lc1.extend(b);
        }
        let mut dropped = Vec::new();
        for (name, col, used) in [
            ("ln_impact_factor", lif, spec.variant.uses_impact_factor()),
            ("ln_c1_k0", lc1, spec.variant.uses_c1()),
        ] {
            if !used {
                continue;
            }
            if drop_constant && is_constant(&col) {
                dropped.push(name.to_string());
            } else {
                columns.push((name.to_string(), col));
            }
        }
        let response = data
            .iter()
            .map(|r| {
                let cf = r.c_future();
                if cf.is_finite() && cf >= 0.0 {
                    Ok(spec.response(cf))
                } else {
                    Err(Error::InvalidCovariate(format!("c_future {cf}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((DesignMatrix::from_columns(columns, response)?, dropped))
    }

    pub fn nrows(&self) -> usize {
        self.response.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    /// Same design with the response replaced.
    pub fn with_response(&self, response: Vec<f64>) -> Result<Self> {
        if response.len() != self.nrows() || response.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("replacement response is invalid".into()));
        }
        Ok(DesignMatrix {
            response,
            ..self.clone()
        })
    }

    pub fn residuals(&self, coefficients: &[f64]) -> Vec<f64> {
        (0..self.nrows())
            .map(|i| {
                let fit: f64 = self.row(i).iter().zip(coefficients).map(|(x, b)| x * b).sum();
                self.response[i] - fit
            })
            .collect()
    }

    /// Rejects designs whose columns are (numerically) linearly dependent,
    /// judged on the unit-diagonal scaled Gram matrix.
    pub fn check_rank(&self) -> Result<()> {
        let n = self.nrows();
        let k = self.ncols;
        if n < k {
            return Err(Error::DegenerateDesign(format!(
                "{n} observations for {k} coefficients"
            )));
        }
        let mut gram = DMatrix::<f64>::zeros(k, k);
        for i in 0..n {
            let row = self.row(i);
            for a in 0..k {
                for b in a..k {
                    gram[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        let diag: Vec<f64> = (0..k).map(|a| gram[(a, a)]).collect();
        if let Some(a) = diag.iter().position(|&d| d == 0.0) {
            return Err(Error::DegenerateDesign(format!(
                "column `{}` is identically zero",
                self.names[a]
            )));
        }
        let scaled = DMatrix::from_fn(k, k, |a, b| gram[(a, b)] / (diag[a] * diag[b]).sqrt());
        let min_eig = scaled
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig < 1e-10 {
            return Err(Error::DegenerateDesign(format!(
                "columns {:?} are collinear (smallest scaled eigenvalue {min_eig:.2e})",
                self.names
            )));
        }
        Ok(())
    }
}

fn is_constant(col: &[f64]) -> bool {
    let (lo, hi) = col
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo <= 1e-12 * hi.abs().max(1.0)
}

/// Counts of strictly negative, zero and strictly positive residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResidualSigns {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

impl ResidualSigns {
    pub fn count(residuals: &[f64], tol: f64) -> Self {
        let mut s = ResidualSigns {
            negative: 0,
            zero: 0,
            positive: 0,
        };
        for &r in residuals {
            if r.abs() <= tol {
                s.zero += 1;
            } else if r < 0.0 {
                s.negative += 1;
            } else {
                s.positive += 1;
            }
        }
        s
    }

    /// `N- <= n p <= N- + N0`, the first-order optimality condition of the
    /// intercept coordinate.
    pub fn satisfies_optimality(&self, p: f64) -> bool {
        let n = (self.negative + self.zero + self.positive) as f64;
        let np = n * p;
        self.negative as f64 <= np + 1e-9 && np <= (self.negative + self.zero) as f64 + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileSolution {
    /// One coefficient per design column.
    pub coefficients: Vec<f64>,
    pub loss: f64,
    pub signs: ResidualSigns,
    /// Rows interpolated by the solution hyperplane.
    pub basis: Vec<usize>,
    pub iterations: usize,
}

pub fn zero_tolerance(design: &DesignMatrix) -> f64 {
    let scale = design.response().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    ZERO_RESIDUAL_TOL * scale
}

pub fn fit_single_quantile(design: &DesignMatrix, p: f64) -> Result<QuantileSolution> {
    fit_single_quantile_with(design, p, &SolverOptions::default())
}

pub fn fit_single_quantile_with(
    design: &DesignMatrix,
    p: f64,
    opts: &SolverOptions,
) -> Result<QuantileSolution> {
    check_probability(p)?;
    design.check_rank()?;
    let vertex = simplex::solve(design, p, opts)?;
    let residuals = design.residuals(&vertex.coefficients);
    Ok(QuantileSolution {
        loss: pinball_loss(p, &residuals)?,
        signs: ResidualSigns::count(&residuals, zero_tolerance(design)),
        coefficients: vertex.coefficients,
        basis: vertex.basis,
        iterations: vertex.iterations,
    })
}
