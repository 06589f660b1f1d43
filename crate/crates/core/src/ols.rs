//! Multi-outcome ordinary least squares with a shared design matrix.
//!
//! Every outcome column is regressed on the same `n x p` design, so one
//! Cholesky factorization of `X'X` serves all `q` outcomes. The fit keeps
//! `(X'X)^-1` and the per-outcome residual variances because the shrinkage
//! risk estimate needs both at every test point.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest admissible `lambda_min / lambda_max` of `X'X / n`.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Relative tolerance on `||X'X B - X'Y||_inf`.
pub const NORMAL_EQUATION_TOLERANCE: f64 = 1e-8;

/// Training data: `n x p` design and `n x q` outcomes.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::shape("training rows", x.nrows(), y.nrows()));
        }
        if x.ncols() == 0 {
            return Err(Error::shape("design columns", ">= 1", 0));
        }
        if x.nrows() <= x.ncols() {
            return Err(Error::DegenerateSample {
                n: x.nrows(),
                p: x.ncols(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.y.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct OlsFit {
    /// `p x q` coefficient estimates, one column per outcome.
    pub b_hat: DMatrix<f64>,
    /// `(X'X)^-1`.
    pub gram_inv: DMatrix<f64>,
    /// Unbiased residual variance per outcome, `||r_k||^2 / (n - p)`.
    pub sigma2_hat: DVector<f64>,
    pub n: usize,
    pub p: usize,
    pub q: usize,
}

/// OLS quantities evaluated at one test covariate vector.
#[derive(Debug, Clone)]
pub struct PredictiveMoments {
    /// `x0' B_k` for every outcome.
    pub y0_hat: DVector<f64>,
    /// Estimated variance of each `x0' B_k`, equal to `sigma2_hat[k] * c_x0`.
    pub sigma2_0: DVector<f64>,
    /// `x0' (X'X)^-1 x0`.
    pub c_x0: f64,
    /// `(X'X)^-1 x0`.
    pub w: DVector<f64>,
}

/// Fit OLS for all outcomes at once.
pub fn fit_ols(data: &Dataset) -> Result<OlsFit> {
    let (n, p, q) = (data.n(), data.p(), data.q());
    let x = data.x();
    let y = data.y();

    let gram = x.tr_mul(x);
    let scaled = &gram / n as f64;
    let eigenvalues = scaled.symmetric_eigenvalues();
    let max_eig = eigenvalues.max();
    let min_eig = eigenvalues.min();
    let ratio = if max_eig > 0.0 { min_eig / max_eig } else { 0.0 };
    if !(ratio >= RANK_TOLERANCE) {
        return Err(Error::RankDeficient { ratio });
    }

    let chol = gram.clone().cholesky().ok_or(Error::RankDeficient { ratio })?;
    let xty = x.tr_mul(y);
    let b_hat = chol.solve(&xty);
    let gram_inv = symmetrize(chol.inverse());

    let residual = normal_equation_residual(&gram, &b_hat, &xty);
    let scale = xty.amax();
    if residual > NORMAL_EQUATION_TOLERANCE * scale {
        return Err(Error::RankDeficient { ratio });
    }

    let fitted = x * &b_hat;
    let dof = (n - p) as f64;
    let sigma2_hat = DVector::from_iterator(
        q,
        (0..q).map(|k| {
            let rss: f64 = y
                .column(k)
                .iter()
                .zip(fitted.column(k).iter())
                .map(|(obs, fit)| (obs - fit).powi(2))
                .sum();
            rss / dof
        }),
    );

    Ok(OlsFit {
        b_hat,
        gram_inv,
        sigma2_hat,
        n,
        p,
        q,
    })
}

/// `||X'X B - X'Y||_inf`.
pub fn normal_equation_residual(gram: &DMatrix<f64>, b_hat: &DMatrix<f64>, xty: &DMatrix<f64>) -> f64 {
    (gram * b_hat - xty).amax()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl OlsFit {
    pub fn mean_sigma2(&self) -> f64 {
        self.sigma2_hat.mean()
    }

    pub(crate) fn check_x0(&self, x0: &DVector<f64>) -> Result<()> {
        if x0.len() != self.p {
            return Err(Error::shape("test covariate length", self.p, x0.len()));
        }
        Ok(())
    }

    pub fn predictive_moments(&self, x0: &DVector<f64>) -> Result<PredictiveMoments> {
        self.check_x0(x0)?;
        let y0_hat = self.b_hat.tr_mul(x0);
        let w = &self.gram_inv * x0;
        let c_x0 = x0.dot(&w);
        let sigma2_0 = &self.sigma2_hat * c_x0;
        Ok(PredictiveMoments {
            y0_hat,
            sigma2_0,
            c_x0,
            w,
        })
    }

    /// Plain OLS predictions `X_test B` for a batch of rows.
    pub fn predict(&self, x_test: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x_test.ncols() != self.p {
            return Err(Error::shape("test design columns", self.p, x_test.ncols()));
        }
        Ok(x_test * &self.b_hat)
    }
}
