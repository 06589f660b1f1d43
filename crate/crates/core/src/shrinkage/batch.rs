//! Per-point quadratics without materializing the `q x (p+1)` features.
//!
//! With `D = diag(x0)`, the feature Gram matrix is
//! `[[q, 1'B'D], [DB1, D B B' D]]`, so caching `B B'` and `B 1` once per fit
//! makes every test point cost `O(p^2)` before the final `O(pq)` prediction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::quadratic::RiskQuadratic;
use super::{constrained_on, minimize_unconstrained, Rule, SolveMode, ThetaSolution};
use crate::error::{Error, Result};
use crate::ols::OlsFit;

#[derive(Debug, Clone)]
pub struct ShrinkagePredictor<'a> {
    fit: &'a OlsFit,
    outer: DMatrix<f64>,
    row_sums: DVector<f64>,
    mean_sigma2: f64,
}

/// Cached products of the estimated and true coefficients for oracle fits.
#[derive(Debug, Clone)]
pub struct OracleMoments {
    /// `B_hat B'`.
    cross_outer: DMatrix<f64>,
    /// `B B'`.
    true_outer: DMatrix<f64>,
    true_row_sums: DVector<f64>,
}

impl OracleMoments {
    pub fn new(fit: &OlsFit, b_true: &DMatrix<f64>) -> Result<Self> {
        if b_true.shape() != fit.b_hat.shape() {
            return Err(Error::shape(
                "true coefficient matrix",
                format!("{}x{}", fit.p, fit.q),
                format!("{}x{}", b_true.nrows(), b_true.ncols()),
            ));
        }
        Ok(Self {
            cross_outer: &fit.b_hat * b_true.transpose(),
            true_outer: b_true * b_true.transpose(),
            true_row_sums: b_true.column_sum(),
        })
    }
}

impl<'a> ShrinkagePredictor<'a> {
    pub fn new(fit: &'a OlsFit) -> Self {
        Self {
            fit,
            outer: &fit.b_hat * fit.b_hat.transpose(),
            row_sums: fit.b_hat.column_sum(),
            mean_sigma2: fit.mean_sigma2(),
        }
    }

    pub fn fit(&self) -> &OlsFit {
        self.fit
    }

    fn feature_gram(&self, x0: &DVector<f64>) -> DMatrix<f64> {
        let p = self.fit.p;
        let q = self.fit.q as f64;
        DMatrix::from_fn(p + 1, p + 1, |i, j| match (i, j) {
            (0, 0) => 1.0,
            (0, j) => x0[j - 1] * self.row_sums[j - 1] / q,
            (i, 0) => x0[i - 1] * self.row_sums[i - 1] / q,
            (i, j) => x0[i - 1] * x0[j - 1] * self.outer[(i - 1, j - 1)] / q,
        })
    }

    /// Empirical risk quadratic at `x0`, equal to `build_point(..).quadratic()`.
    pub fn quadratic(&self, x0: &DVector<f64>) -> Result<RiskQuadratic> {
        self.fit.check_x0(x0)?;
        let p = self.fit.p;
        let q = self.fit.q as f64;
        let outer_x0 = &self.outer * x0;
        let w = &self.fit.gram_inv * x0;
        let c_x0 = x0.dot(&w);
        let cross = DVector::from_fn(p + 1, |j, _| {
            if j == 0 {
                x0.dot(&self.row_sums) / q
            } else {
                x0[j - 1] * outer_x0[j - 1] / q
            }
        });
        let penalty = DVector::from_fn(p + 1, |j, _| {
            if j == 0 {
                0.0
            } else {
                x0[j - 1] * w[j - 1] * self.mean_sigma2
            }
        });
        Ok(RiskQuadratic {
            gram: self.feature_gram(x0),
            cross,
            penalty,
            offset: x0.dot(&outer_x0) / q - c_x0 * self.mean_sigma2,
            n_outcomes: self.fit.q,
        })
    }

    /// True-loss quadratic at `x0`.
    pub fn oracle_quadratic(&self, x0: &DVector<f64>, oracle: &OracleMoments) -> Result<RiskQuadratic> {
        self.fit.check_x0(x0)?;
        let p = self.fit.p;
        let q = self.fit.q as f64;
        let cross_x0 = &oracle.cross_outer * x0;
        let cross = DVector::from_fn(p + 1, |j, _| {
            if j == 0 {
                x0.dot(&oracle.true_row_sums) / q
            } else {
                x0[j - 1] * cross_x0[j - 1] / q
            }
        });
        Ok(RiskQuadratic {
            gram: self.feature_gram(x0),
            cross,
            penalty: DVector::zeros(p + 1),
            offset: x0.dot(&(&oracle.true_outer * x0)) / q,
            n_outcomes: self.fit.q,
        })
    }

    /// Shrinkage weights at `x0`; `None` for the OLS rule.
    pub fn solve(&self, x0: &DVector<f64>, rule: &Rule) -> Result<Option<ThetaSolution>> {
        match rule {
            Rule::Ols => Ok(None),
            Rule::Unconstrained => {
                minimize_unconstrained(&self.quadratic(x0)?, SolveMode::Unconstrained).map(Some)
            }
            Rule::Constrained(opts) => constrained_on(
                &self.quadratic(x0)?,
                opts,
                None,
                SolveMode::Constrained { m: opts.m },
            )
            .map(Some),
        }
    }

    /// `theta_0 + B_hat' (x0 o theta_{1..p})`.
    pub fn apply(&self, x0: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.fit.check_x0(x0)?;
        let p = self.fit.p;
        if theta.len() != p + 1 {
            return Err(Error::shape("theta length", p + 1, theta.len()));
        }
        let scaled = DVector::from_fn(p, |j, _| x0[j] * theta[j + 1]);
        let mut out = self.fit.b_hat.tr_mul(&scaled);
        out.add_scalar_mut(theta[0]);
        Ok(out)
    }

    pub fn predict(&self, x0: &DVector<f64>, rule: &Rule) -> Result<DVector<f64>> {
        match self.solve(x0, rule)? {
            None => Ok(self.fit.b_hat.tr_mul(x0)),
            Some(sol) => self.apply(x0, &sol.theta),
        }
    }

    /// Predict every row of `x_test` (rows are independent and run in parallel).
    pub fn predict_batch(&self, x_test: &DMatrix<f64>, rule: &Rule) -> Result<DMatrix<f64>> {
        if x_test.ncols() != self.fit.p {
            return Err(Error::shape("test design columns", self.fit.p, x_test.ncols()));
        }
        let rows: Vec<DVector<f64>> = (0..x_test.nrows())
            .into_par_iter()
            .map(|i| {
                let x0 = x_test.row(i).transpose();
                self.predict(&x0, rule)
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(rows.len(), self.fit.q, |i, k| rows[i][k]))
    }
}
