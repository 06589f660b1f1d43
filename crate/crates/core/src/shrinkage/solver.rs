//! Minimizers of a convex quadratic, unconstrained and over a box.
//!
//! The box solver is cyclic coordinate descent with exact per-coordinate
//! minimization. Every few sweeps it tries a Newton step restricted to the
//! currently free coordinates; the step is truncated to stay inside the box,
//! so the objective never increases. Once the active set is right the Newton
//! step lands on the exact minimizer, which lets ill-conditioned problems
//! reach tight KKT tolerances that pure coordinate descent would need
//! thousands of sweeps for.

use nalgebra::{DMatrix, DVector};

use super::quadratic::RiskQuadratic;
use super::{SolveMode, ThetaSolution};
use crate::error::{Error, Result};

/// Minimum `lambda_min / lambda_max` of `X~'X~ / q` for the closed form.
pub const ILL_POSED_TOLERANCE: f64 = 1e-12;

const POLISH_EVERY: usize = 4;

/// Bounds, tolerance and sweep cap for the box-constrained solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxOptions {
    pub m: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BoxOptions {
    fn default() -> Self {
        Self {
            m: 1e6,
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

impl BoxOptions {
    pub fn with_bound(m: f64) -> Self {
        Self { m, ..Self::default() }
    }

    /// Lower and upper bounds: `theta_0` in `[-M, M]`, the rest in `[0, M]`.
    pub fn bounds(&self, dim: usize) -> (DVector<f64>, DVector<f64>) {
        let lower = DVector::from_fn(dim, |j, _| if j == 0 { -self.m } else { 0.0 });
        let upper = DVector::from_element(dim, self.m);
        (lower, upper)
    }

    fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) || !self.m.is_finite() {
            return Err(Error::InvalidBound(self.m));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "solver tolerance must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Exact stationary point `G theta = cross - penalty`.
pub fn minimize_unconstrained(quad: &RiskQuadratic, mode: SolveMode) -> Result<ThetaSolution> {
    let dim = quad.dim();
    if quad.n_outcomes <= dim {
        return Err(Error::IllPosed(format!(
            "need more outcomes than shrinkage parameters (q = {}, p + 1 = {dim}); use the constrained rule",
            quad.n_outcomes
        )));
    }
    let eigenvalues = quad.gram.clone().symmetric_eigenvalues();
    let max_eig = eigenvalues.max();
    let min_eig = eigenvalues.min();
    if !(max_eig > 0.0) || min_eig < ILL_POSED_TOLERANCE * max_eig {
        return Err(Error::IllPosed(format!(
            "shrinkage feature matrix is singular (eigenvalue ratio {:.3e}); use the constrained rule",
            if max_eig > 0.0 { min_eig / max_eig } else { 0.0 }
        )));
    }
    stationary_point(quad, mode)
}

/// Solve `G theta = cross - penalty` without the conditioning check. Fails
/// only when the factorization itself breaks down.
pub fn stationary_point(quad: &RiskQuadratic, mode: SolveMode) -> Result<ThetaSolution> {
    let rhs = quad.rhs();
    let theta = match quad.gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => quad
            .gram
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::IllPosed("shrinkage feature matrix is singular".into()))?,
    };
    let kkt_residual = quad.gradient(&theta).amax() / quad.residual_scale();
    Ok(ThetaSolution {
        empirical_risk: quad.value(&theta),
        theta,
        mode,
        iterations: 0,
        kkt_residual,
    })
}

/// Relative projected-gradient residual of `theta` inside `[lower, upper]`.
pub fn kkt_residual(
    quad: &RiskQuadratic,
    theta: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> f64 {
    let grad = quad.gradient(theta);
    let worst = (0..theta.len())
        .map(|j| {
            let g = grad[j];
            if theta[j] <= lower[j] {
                (-g).max(0.0)
            } else if theta[j] >= upper[j] {
                g.max(0.0)
            } else {
                g.abs()
            }
        })
        .fold(0.0, f64::max);
    worst / quad.residual_scale()
}

fn clip(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

struct BoxProblem<'a> {
    quad: &'a RiskQuadratic,
    rhs: DVector<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxProblem<'_> {
    fn clip_into(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(theta.len(), |j, _| clip(theta[j], self.lower[j], self.upper[j]))
    }

    fn sweep(&self, theta: &mut DVector<f64>) {
        let gram = &self.quad.gram;
        for j in 0..theta.len() {
            let diag = gram[(j, j)];
            // partial = rhs_j - sum_{i != j} G_ji theta_i
            let partial = self.rhs[j] - gram.column(j).dot(theta) + diag * theta[j];
            let next = if diag > 0.0 {
                partial / diag
            } else if partial > 0.0 {
                self.upper[j]
            } else if partial < 0.0 {
                self.lower[j]
            } else {
                theta[j]
            };
            theta[j] = clip(next, self.lower[j], self.upper[j]);
        }
    }

    /// Newton step on the free coordinates, truncated to the box.
    fn polish(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let grad = self.quad.gradient(theta);
        let free: Vec<usize> = (0..theta.len())
            .filter(|&j| {
                let at_lower = theta[j] <= self.lower[j] && grad[j] >= 0.0;
                let at_upper = theta[j] >= self.upper[j] && grad[j] <= 0.0;
                !(at_lower || at_upper)
            })
            .collect();
        if free.is_empty() {
            return None;
        }
        let k = free.len();
        let gram = &self.quad.gram;
        let sub = DMatrix::from_fn(k, k, |a, b| gram[(free[a], free[b])]);
        // rhs_F - G_{F,A} theta_A, written as rhs_F - (G theta)_F + G_FF theta_F
        let full = gram * theta;
        let sub_rhs = DVector::from_fn(k, |a, _| {
            let j = free[a];
            let within: f64 = free.iter().map(|&i| gram[(j, i)] * theta[i]).sum();
            self.rhs[j] - full[j] + within
        });
        let solved = sub.cholesky()?.solve(&sub_rhs);
        if solved.iter().any(|v| !v.is_finite()) {
            return None;
        }

        let mut step = 1.0_f64;
        for (a, &j) in free.iter().enumerate() {
            let delta = solved[a] - theta[j];
            if delta > 0.0 && theta[j] + delta > self.upper[j] {
                step = step.min((self.upper[j] - theta[j]) / delta);
            } else if delta < 0.0 && theta[j] + delta < self.lower[j] {
                step = step.min((self.lower[j] - theta[j]) / delta);
            }
        }
        let mut next = theta.clone();
        for (a, &j) in free.iter().enumerate() {
            next[j] = theta[j] + step * (solved[a] - theta[j]);
        }
        Some(self.clip_into(&next))
    }
}

/// Minimize the quadratic over `[lower, upper]` starting from the best of the
/// supplied candidate points (each is clipped into the box first).
pub fn minimize_box(
    quad: &RiskQuadratic,
    opts: &BoxOptions,
    candidates: &[DVector<f64>],
    mode: SolveMode,
) -> Result<ThetaSolution> {
    opts.validate()?;
    let dim = quad.dim();
    let (lower, upper) = opts.bounds(dim);
    let problem = BoxProblem {
        quad,
        rhs: quad.rhs(),
        lower,
        upper,
    };

    let mut theta = candidates
        .iter()
        .filter(|c| c.len() == dim && c.iter().all(|v| v.is_finite()))
        .map(|c| problem.clip_into(c))
        .map(|c| (quad.value(&c), c))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, c)| c)
        .unwrap_or_else(|| problem.clip_into(&DVector::zeros(dim)));
    let mut value = quad.value(&theta);

    let kkt = |t: &DVector<f64>| kkt_residual(quad, t, &problem.lower, &problem.upper);
    let try_polish = |theta: &mut DVector<f64>, value: &mut f64| {
        if let Some(candidate) = problem.polish(theta) {
            let candidate_value = quad.value(&candidate);
            if candidate_value <= *value {
                *theta = candidate;
                *value = candidate_value;
            }
        }
    };

    try_polish(&mut theta, &mut value);
    let mut residual = kkt(&theta);
    let mut iterations = 0;
    while residual > opts.tol && iterations < opts.max_iter {
        problem.sweep(&mut theta);
        iterations += 1;
        value = quad.value(&theta);
        if iterations % POLISH_EVERY == 0 || kkt(&theta) <= opts.tol {
            try_polish(&mut theta, &mut value);
        }
        residual = kkt(&theta);
    }

    let solution = ThetaSolution {
        theta,
        mode,
        empirical_risk: value,
        iterations,
        kkt_residual: residual,
    };
    if residual > opts.tol {
        return Err(Error::NoConvergence {
            best: Box::new(solution),
        });
    }
    Ok(solution)
}
