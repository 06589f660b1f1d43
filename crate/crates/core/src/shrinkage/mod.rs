//! Coordinate-wise linear shrinkage of OLS predictions.
//!
//! For a test covariate `x0` the prediction for outcome `k` is
//! `theta_0 + sum_j theta_j * x0_j * B_jk`. The weights `theta` are chosen
//! per test point by minimizing an unbiased estimate of the compound
//! prediction risk over all `q` outcomes, either freely or inside the box
//! `theta_0 in [-M, M]`, `theta_j in [0, M]`.

mod batch;
mod quadratic;
mod solver;

use nalgebra::{DMatrix, DVector};

pub use batch::{OracleMoments, ShrinkagePredictor};
pub use quadratic::RiskQuadratic;
pub use solver::{
    kkt_residual, minimize_box, minimize_unconstrained, stationary_point, BoxOptions, ILL_POSED_TOLERANCE,
};

use crate::error::{Error, Result};
use crate::ols::OlsFit;

/// Which criterion a [`ThetaSolution`] minimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    Unconstrained,
    Constrained { m: f64 },
    OracleUnconstrained,
    OracleConstrained { m: f64 },
}

#[derive(Debug, Clone)]
pub struct ThetaSolution {
    /// `(theta_0, theta_1, ..., theta_p)`.
    pub theta: DVector<f64>,
    pub mode: SolveMode,
    /// Objective at `theta`: the empirical risk, or the true loss for oracles.
    pub empirical_risk: f64,
    /// Coordinate-descent sweeps (0 for closed-form solves).
    pub iterations: usize,
    /// Projected-gradient infinity norm divided by `1 + ||X~'t / q||_inf`.
    pub kkt_residual: f64,
}

/// Prediction rule applied at each test point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    Ols,
    Unconstrained,
    Constrained(BoxOptions),
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::Ols => "ols",
            Rule::Unconstrained => "coolish-unconstrained",
            Rule::Constrained(_) => "coolish-constrained",
        }
    }
}

/// Everything the risk estimate needs at one test point.
#[derive(Debug, Clone)]
pub struct ShrinkagePoint {
    pub x0: DVector<f64>,
    /// OLS predictions `x0' B_k`.
    pub y0_hat: DVector<f64>,
    /// `q x (p+1)` features; row `k` is `(1, x0_1 B_1k, ..., x0_p B_pk)`.
    pub x_tilde: DMatrix<f64>,
    /// Bias correction `(0, x0 o (X'X)^-1 x0 * mean_k sigma2_k)`.
    pub q_vec: DVector<f64>,
    pub sigma2_0: DVector<f64>,
    pub c_x0: f64,
    /// `(X'X)^-1 x0`.
    pub w: DVector<f64>,
}

impl ShrinkagePoint {
    pub fn p(&self) -> usize {
        self.x0.len()
    }

    pub fn q(&self) -> usize {
        self.y0_hat.len()
    }

    fn check_theta(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.p() + 1 {
            return Err(Error::shape("theta length", self.p() + 1, theta.len()));
        }
        Ok(())
    }

    /// The empirical risk as an explicit quadratic in `theta`.
    pub fn quadratic(&self) -> RiskQuadratic {
        RiskQuadratic::from_design(
            &self.x_tilde,
            &self.y0_hat,
            self.q_vec.clone(),
            -self.sigma2_0.mean(),
        )
    }

    /// The true loss as a quadratic in `theta`, given the true coefficients.
    pub fn oracle_quadratic(&self, b_true: &DMatrix<f64>) -> Result<RiskQuadratic> {
        let mu = self.true_means(b_true)?;
        Ok(RiskQuadratic::from_design(
            &self.x_tilde,
            &mu,
            DVector::zeros(self.p() + 1),
            0.0,
        ))
    }

    fn true_means(&self, b_true: &DMatrix<f64>) -> Result<DVector<f64>> {
        if b_true.nrows() != self.p() || b_true.ncols() != self.q() {
            return Err(Error::shape(
                "true coefficient matrix",
                format!("{}x{}", self.p(), self.q()),
                format!("{}x{}", b_true.nrows(), b_true.ncols()),
            ));
        }
        Ok(b_true.tr_mul(&self.x0))
    }

    /// Shrinkage predictions `X~ theta`.
    pub fn predict(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_theta(theta)?;
        Ok(&self.x_tilde * theta)
    }
}

/// `(0, 1, ..., 1)`: the weights that reproduce plain OLS predictions.
pub fn ols_theta(p: usize) -> DVector<f64> {
    DVector::from_fn(p + 1, |j, _| if j == 0 { 0.0 } else { 1.0 })
}

pub fn build_point(fit: &OlsFit, x0: &DVector<f64>) -> Result<ShrinkagePoint> {
    let moments = fit.predictive_moments(x0)?;
    let (p, q) = (fit.p, fit.q);
    let x_tilde = DMatrix::from_fn(q, p + 1, |k, j| {
        if j == 0 {
            1.0
        } else {
            x0[j - 1] * fit.b_hat[(j - 1, k)]
        }
    });
    let mean_sigma2 = fit.mean_sigma2();
    let q_vec = DVector::from_fn(p + 1, |j, _| {
        if j == 0 {
            0.0
        } else {
            x0[j - 1] * moments.w[j - 1] * mean_sigma2
        }
    });
    Ok(ShrinkagePoint {
        x0: x0.clone(),
        y0_hat: moments.y0_hat,
        x_tilde,
        q_vec,
        sigma2_0: moments.sigma2_0,
        c_x0: moments.c_x0,
        w: moments.w,
    })
}

/// Unbiased estimate of the compound prediction risk of `theta`.
pub fn empirical_risk(pt: &ShrinkagePoint, theta: &DVector<f64>) -> Result<f64> {
    pt.check_theta(theta)?;
    let q = pt.q() as f64;
    let fitted = &pt.x_tilde * theta;
    let misfit: f64 = pt
        .y0_hat
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| (y - f).powi(2))
        .sum::<f64>()
        / q;
    Ok(-pt.sigma2_0.sum() / q + misfit + 2.0 * pt.q_vec.dot(theta))
}

pub fn empirical_risk_gradient(pt: &ShrinkagePoint, theta: &DVector<f64>) -> Result<DVector<f64>> {
    pt.check_theta(theta)?;
    let q = pt.q() as f64;
    let resid = &pt.y0_hat - &pt.x_tilde * theta;
    Ok(pt.x_tilde.tr_mul(&resid) * (-2.0 / q) + &pt.q_vec * 2.0)
}

pub fn solve_unconstrained(pt: &ShrinkagePoint) -> Result<ThetaSolution> {
    minimize_unconstrained(&pt.quadratic(), SolveMode::Unconstrained)
}

pub fn solve_constrained(pt: &ShrinkagePoint, opts: &BoxOptions) -> Result<ThetaSolution> {
    solve_constrained_from(pt, opts, None)
}

/// Box-constrained minimizer; the result is never worse than the clipped
/// warm start.
pub fn solve_constrained_from(
    pt: &ShrinkagePoint,
    opts: &BoxOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<ThetaSolution> {
    let quad = pt.quadratic();
    constrained_on(&quad, opts, warm_start, SolveMode::Constrained { m: opts.m })
}

pub(crate) fn constrained_on(
    quad: &RiskQuadratic,
    opts: &BoxOptions,
    warm_start: Option<&DVector<f64>>,
    mode: SolveMode,
) -> Result<ThetaSolution> {
    let mut candidates = Vec::with_capacity(3);
    if let Some(w) = warm_start {
        if w.len() != quad.dim() {
            return Err(Error::shape("warm start length", quad.dim(), w.len()));
        }
        candidates.push(w.clone());
    }
    if let Ok(free) = minimize_unconstrained(quad, mode) {
        candidates.push(free.theta);
    }
    candidates.push(ols_theta(quad.dim() - 1));
    minimize_box(quad, opts, &candidates, mode)
}

/// Shrinkage prediction for one test point under the given rule.
pub fn predict_point(fit: &OlsFit, x0: &DVector<f64>, rule: &Rule) -> Result<DVector<f64>> {
    let pt = build_point(fit, x0)?;
    let theta = match rule {
        Rule::Ols => return Ok(pt.y0_hat),
        Rule::Unconstrained => solve_unconstrained(&pt)?.theta,
        Rule::Constrained(opts) => solve_constrained(&pt, opts)?.theta,
    };
    pt.predict(&theta)
}

/// `(1/q) sum_k (x0' B_k - X~_k' theta)^2` against the true coefficients.
pub fn true_loss(pt: &ShrinkagePoint, b_true: &DMatrix<f64>, theta: &DVector<f64>) -> Result<f64> {
    pt.check_theta(theta)?;
    let mu = pt.true_means(b_true)?;
    let fitted = &pt.x_tilde * theta;
    Ok(mu
        .iter()
        .zip(fitted.iter())
        .map(|(m, f)| (m - f).powi(2))
        .sum::<f64>()
        / pt.q() as f64)
}

pub fn oracle_unconstrained(pt: &ShrinkagePoint, b_true: &DMatrix<f64>) -> Result<ThetaSolution> {
    minimize_unconstrained(&pt.oracle_quadratic(b_true)?, SolveMode::OracleUnconstrained)
}

pub fn oracle_constrained(
    pt: &ShrinkagePoint,
    b_true: &DMatrix<f64>,
    opts: &BoxOptions,
) -> Result<ThetaSolution> {
    let quad = pt.oracle_quadratic(b_true)?;
    constrained_on(&quad, opts, None, SolveMode::OracleConstrained { m: opts.m })
}
