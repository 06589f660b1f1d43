use nalgebra::{DMatrix, DVector};

/// The empirical risk (or true loss) as an explicit quadratic in `theta`:
///
/// ```text
/// f(theta) = offset + theta' G theta - 2 cross' theta + 2 penalty' theta
/// ```
///
/// with `G = X~'X~ / q` and `cross = X~' t / q` for a target vector `t`
/// (the OLS predictions for the empirical risk, the true means for the
/// oracle loss).
#[derive(Debug, Clone)]
pub struct RiskQuadratic {
    pub gram: DMatrix<f64>,
    pub cross: DVector<f64>,
    pub penalty: DVector<f64>,
    pub offset: f64,
    /// Number of outcomes the averages were taken over.
    pub n_outcomes: usize,
}

impl RiskQuadratic {
    /// Build from an explicit `q x d` feature matrix and target.
    ///
    /// `offset_shift` is added to `t't / q`; the empirical risk passes
    /// `-mean(sigma2_0)` here.
    pub fn from_design(
        x_tilde: &DMatrix<f64>,
        target: &DVector<f64>,
        penalty: DVector<f64>,
        offset_shift: f64,
    ) -> Self {
        let q = x_tilde.nrows();
        let scale = 1.0 / q as f64;
        Self {
            gram: x_tilde.tr_mul(x_tilde) * scale,
            cross: x_tilde.tr_mul(target) * scale,
            penalty,
            offset: target.norm_squared() * scale + offset_shift,
            n_outcomes: q,
        }
    }

    pub fn dim(&self) -> usize {
        self.cross.len()
    }

    /// `cross - penalty`, the right-hand side of the stationarity system.
    pub fn rhs(&self) -> DVector<f64> {
        &self.cross - &self.penalty
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        let quad = theta.dot(&(&self.gram * theta));
        self.offset + quad - 2.0 * self.rhs().dot(theta)
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        (&self.gram * theta - self.rhs()) * 2.0
    }

    /// Scale used to make KKT residuals relative: `1 + ||cross||_inf`.
    pub fn residual_scale(&self) -> f64 {
        1.0 + self.cross.amax()
    }
}
