//! Exact vertex-walking solver for the quantile regression LP.
//!
//! An optimum of `min sum rho_p(y_i - x_i b)` is attained at a hyperplane that
//! interpolates `k` observations (the basis). From a basis we test the dual
//! multipliers of the basic observations against `[p - 1, p]`; a violated
//! multiplier gives an edge direction along which the loss decreases, and an
//! exact line search over the residual breakpoints picks the observation
//! that enters the basis.
//!
//! Integer citation counts produce heavily degenerate problems (many
//! observations on the same hyperplane). The walk runs on responses with a
//! tiny index-seeded perturbation, which makes every vertex simple; the
//! final coefficients are recomputed from the unperturbed responses at the
//! optimal basis, which is an optimal vertex of the original problem.
//! When rounding still leaves an observation numerically on a basis
//! hyperplane, the walk can revisit a basis; that is detected and the walk
//! restarts under a larger, reseeded perturbation.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector};

use super::DesignMatrix;
use crate::error::{Error, Result};

/// Spacing of the response perturbation, in units of the response's
/// machine epsilon.
const PERTURBATION_ULPS: f64 = 1024.0;

/// Restarts after a revisited basis; each one scales the spacing by 256.
const MAX_RESTARTS: u32 = 3;

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Tolerance on the dual feasibility test.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: 1e-9,
            max_iterations: 10_000,
        }
    }
}

pub(crate) struct Vertex {
    pub coefficients: Vec<f64>,
    pub basis: Vec<usize>,
    pub iterations: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in [-0.5, 0.5), a pure function of the row index.
fn jitter(i: usize) -> f64 {
    (splitmix64(i as u64) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

/// Adds `(rank(i) + 1 + u(i)) * spacing` to each response, where `rank` is a
/// fixed pseudo-random permutation of the row indices and `u(i)` a fixed
/// pseudo-random fraction in [0, 0.5). The rank term keeps tied observations
/// apart; the fraction keeps the offsets free of affine relations, which
/// would otherwise put extra observations on basis hyperplanes. `attempt`
/// reseeds both and enlarges the spacing.
fn perturbed_response(y: &[f64], attempt: u32) -> Vec<f64> {
    let scale = y.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let spacing = PERTURBATION_ULPS * 256f64.powi(attempt as i32) * f64::EPSILON * scale;
    let salt = (attempt as usize) << 40;
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_unstable_by_key(|&i| (splitmix64((i ^ salt) as u64), i));
    let mut out = y.to_vec();
    for (rank, &i) in order.iter().enumerate() {
        let fraction = 0.5 * (jitter(i ^ salt ^ 0x5555) + 0.5);
        out[i] += (rank as f64 + 1.0 + fraction) * spacing;
    }
    out
}

fn basis_matrix(x: &DesignMatrix, basis: &[usize]) -> DMatrix<f64> {
    let k = x.ncols();
    DMatrix::from_fn(k, k, |r, c| x.row(basis[r])[c])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Least-squares start shifted to the p-quantile of its residuals; the basis
/// is built greedily from the observations closest to that hyperplane.
fn initial_basis(x: &DesignMatrix, y: &[f64], p: f64) -> Result<Vec<usize>> {
    let n = x.nrows();
    let k = x.ncols();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..k {
            rhs[a] += row[a] * y[i];
            for b in 0..k {
                gram[(a, b)] += row[a] * row[b];
            }
        }
    }
    let ls = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::DegenerateDesign("normal equations are singular".into()))?;
    let resid: Vec<f64> = (0..n).map(|i| y[i] - dot(x.row(i), ls.as_slice())).collect();
    let mut sorted = resid.clone();
    let rank = ((p * n as f64).floor() as usize).min(n - 1);
    let (_, shift, _) = sorted.select_nth_unstable_by(rank, f64::total_cmp);
    let shift = *shift;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        (resid[a] - shift)
            .abs()
            .total_cmp(&(resid[b] - shift).abs())
            .then(a.cmp(&b))
    });

    // Gram-Schmidt over candidate rows until k independent ones are found.
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut basis = Vec::with_capacity(k);
    for &i in &order {
        let row = x.row(i);
        let norm = dot(row, row).sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut v = row.to_vec();
        for q in &ortho {
            let c = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
        }
        let vn = dot(&v, &v).sqrt();
        if vn > 1e-8 * norm {
            v.iter_mut().for_each(|vi| *vi /= vn);
            ortho.push(v);
            basis.push(i);
            if basis.len() == k {
                return Ok(basis);
            }
        }
    }
    Err(Error::DegenerateDesign(
        "fewer linearly independent rows than columns".into(),
    ))
}

pub(crate) fn solve(x: &DesignMatrix, p: f64, opts: &SolverOptions) -> Result<Vertex> {
    let mut spent = 0;
    for attempt in 0..=MAX_RESTARTS {
        let y = perturbed_response(x.response(), attempt);
        match walk(x, &y, p, opts, opts.max_iterations - spent) {
            Ok(mut vertex) => {
                vertex.iterations += spent;
                return Ok(vertex);
            }
            Err(Walk::Cycled(iterations)) => {
                log::debug!("p={p}: basis revisited after {iterations} steps, restarting");
                spent += iterations;
            }
            Err(Walk::Failed(e)) => return Err(e),
        }
    }
    Err(Error::NonConvergence(spent))
}

enum Walk {
    Cycled(usize),
    Failed(Error),
}

impl From<Error> for Walk {
    fn from(e: Error) -> Self {
        Walk::Failed(e)
    }
}

fn walk(x: &DesignMatrix, y: &[f64], p: f64, opts: &SolverOptions, budget: usize) -> std::result::Result<Vertex, Walk> {
    let n = x.nrows();
    let k = x.ncols();
    let mut basis = initial_basis(x, y, p)?;
    let mut in_basis = vec![false; n];
    basis.iter().for_each(|&i| in_basis[i] = true);
    let mut visited: HashSet<Vec<usize>> = HashSet::new();

    let mut resid = vec![0.0; n];
    let mut candidates: Vec<(f64, f64, usize)> = Vec::with_capacity(n);

    for iteration in 0..budget {
        let mut key = basis.clone();
        key.sort_unstable();
        if !visited.insert(key) {
            return Err(Walk::Cycled(iteration));
        }
        let lu = basis_matrix(x, &basis).lu();
        let yb = DVector::from_fn(k, |r, _| y[basis[r]]);
        let beta = lu
            .solve(&yb)
            .ok_or_else(|| Error::DegenerateDesign("singular basis".into()))?;
        let beta = beta.as_slice();

        let mut g = vec![0.0; k];
        for i in 0..n {
            if in_basis[i] {
                resid[i] = 0.0;
                continue;
            }
            let row = x.row(i);
            let r = y[i] - dot(row, beta);
            resid[i] = r;
            let psi = if r >= 0.0 { p } else { p - 1.0 };
            g.iter_mut().zip(row).for_each(|(gj, xj)| *gj += psi * xj);
        }

        // Dual multipliers of the basic observations: X_h' lambda = -g.
        let lt = basis_matrix(x, &basis).transpose().lu();
        let lambda = lt
            .solve(&DVector::from_iterator(k, g.iter().map(|v| -v)))
            .ok_or_else(|| Error::DegenerateDesign("singular basis".into()))?;

        let (leave, violation) = lambda
            .iter()
            .enumerate()
            .map(|(j, &l)| (j, (l - p).max(p - 1.0 - l)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("basis is nonempty");

        log::trace!("p={p} iter={iteration} violation={violation:.3e}");
        if violation <= opts.tolerance {
            let lu0 = basis_matrix(x, &basis).lu();
            let y0 = DVector::from_fn(k, |r, _| x.response()[basis[r]]);
            let coefficients = lu0
                .solve(&y0)
                .ok_or_else(|| Error::DegenerateDesign("singular basis".into()))?
                .as_slice()
                .to_vec();
            return Ok(Vertex {
                coefficients,
                basis,
                iterations: iteration,
            });
        }

        // Release the leaving observation to a negative residual when its
        // multiplier is below p - 1, to a positive one when above p.
        let sign = if lambda[leave] > p { -1.0 } else { 1.0 };
        let mut unit = DVector::<f64>::zeros(k);
        unit[leave] = sign;
        let dir = lu
            .solve(&unit)
            .ok_or_else(|| Error::DegenerateDesign("singular basis".into()))?;
        let dir = dir.as_slice();

        candidates.clear();
        for i in 0..n {
            if in_basis[i] {
                continue;
            }
            // The residual moves as r - t a. Zero residuals count as
            // positive, so they are crossed at t = 0 when a > 0.
            let a = dot(x.row(i), dir);
            let r = resid[i];
            if (r >= 0.0 && a > 0.0) || (r < 0.0 && a < 0.0) {
                candidates.push((r / a, a.abs(), i));
            }
        }

        let entering = first_nonnegative_slope(&mut candidates, -violation)
            .ok_or(Error::NonConvergence(iteration))?;
        in_basis[basis[leave]] = false;
        in_basis[entering] = true;
        basis[leave] = entering;
    }
    Err(Walk::Failed(Error::NonConvergence(budget)))
}

/// Walks breakpoints in increasing `t`, adding each weight to the slope, and
/// returns the observation at which the slope turns nonnegative. Uses
/// repeated partitioning so only the prefix that is actually needed gets
/// ordered.
fn first_nonnegative_slope(cands: &mut [(f64, f64, usize)], start_slope: f64) -> Option<usize> {
    let cmp = |a: &(f64, f64, usize), b: &(f64, f64, usize)| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2));
    let mut slope = start_slope;
    let mut lo = 0;
    let mut hi = cands.len();
    while lo < hi {
        let len = hi - lo;
        if len <= 32 {
            cands[lo..hi].sort_unstable_by(cmp);
            for c in &cands[lo..hi] {
                slope += c.1;
                if slope >= 0.0 {
                    return Some(c.2);
                }
            }
            return None;
        }
        let mid = lo + len / 2;
        cands[lo..hi].select_nth_unstable_by(mid - lo, cmp);
        let left: f64 = cands[lo..mid].iter().map(|c| c.1).sum();
        if slope + left >= 0.0 {
            hi = mid;
        } else {
            slope += left;
            lo = mid;
        }
    }
    None
}
