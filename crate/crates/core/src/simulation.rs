//! Monte Carlo study of the shrinkage rules against OLS and the oracles.
//!
//! Each replication draws a coefficient matrix, a standard normal training
//! design and compound-symmetric noise, fits OLS once and scores every method
//! on fresh standard normal test covariates using the true coefficients.
//! Replication `r` always consumes ChaCha stream `r` of the configured seed,
//! so results do not depend on how replications are scheduled.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ols::{fit_ols, Dataset};
use crate::shrinkage::{
    constrained_on, minimize_unconstrained, ols_theta, stationary_point, BoxOptions, OracleMoments,
    RiskQuadratic, ShrinkagePredictor, SolveMode,
};

/// Standard deviation of the shared coefficient vector `b`.
const DENSE_SHARED_SD: f64 = 2.0;
/// Standard deviation of the per-outcome perturbation `tau_k`.
const DENSE_OUTCOME_SD: f64 = 0.1;
/// Rows kept by the group-sparse structure.
const GROUP_ROWS: usize = 5;
/// Fraction of entries zeroed by the entry-sparse structure.
const ENTRY_ZERO_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Dense,
    #[serde(rename = "group")]
    GroupSparse,
    #[serde(rename = "entry")]
    EntrySparse,
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Dense => "dense",
            Structure::GroupSparse => "group",
            Structure::EntrySparse => "entry",
        })
    }
}

impl FromStr for Structure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dense" => Ok(Structure::Dense),
            "group" | "group-sparse" => Ok(Structure::GroupSparse),
            "entry" | "entry-sparse" => Ok(Structure::EntrySparse),
            other => Err(format!(
                "unknown structure `{other}` (expected dense, group or entry)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Method {
    Ols,
    CoolishUnconstrained,
    CoolishConstrained,
    OracleUnconstrained,
    OracleConstrained,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ols,
        Method::CoolishUnconstrained,
        Method::CoolishConstrained,
        Method::OracleUnconstrained,
        Method::OracleConstrained,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::CoolishUnconstrained => "coolish-unconstrained",
            Method::CoolishConstrained => "coolish-constrained",
            Method::OracleUnconstrained => "oracle-unconstrained",
            Method::OracleConstrained => "oracle-constrained",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One cell of the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub p: usize,
    pub q: usize,
    pub rho: f64,
    pub structure: Structure,
    pub n_replications: usize,
    /// Box bound for the constrained rules.
    pub m: f64,
    pub seed: u64,
    /// Multiplier on the training noise; 0 gives noiseless data.
    pub noise_scale: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_train: 100,
            n_test: 50,
            p: 10,
            q: 1000,
            rho: 0.0,
            structure: Structure::Dense,
            n_replications: 100,
            m: 1e6,
            seed: 0,
            noise_scale: 1.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.p == 0 {
            return fail("p must be at least 1".into());
        }
        if self.n_train <= self.p {
            return fail(format!("n_train ({}) must exceed p ({})", self.n_train, self.p));
        }
        if self.q <= self.p + 1 {
            return fail(format!("q ({}) must exceed p + 1 ({})", self.q, self.p + 1));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return fail(format!("rho must lie in [0, 1), got {}", self.rho));
        }
        if self.structure == Structure::GroupSparse && self.p < GROUP_ROWS {
            return fail(format!(
                "group-sparse structure needs p >= {GROUP_ROWS}, got {}",
                self.p
            ));
        }
        if self.n_test == 0 || self.n_replications == 0 {
            return fail("n_test and n_replications must be positive".into());
        }
        if !(self.m > 0.0) || !self.m.is_finite() {
            return Err(Error::InvalidBound(self.m));
        }
        if !(self.noise_scale >= 0.0) || !self.noise_scale.is_finite() {
            return fail(format!(
                "noise scale must be finite and non-negative, got {}",
                self.noise_scale
            ));
        }
        Ok(())
    }

    pub fn scenario_id(&self) -> String {
        format!(
            "{}_n{}_p{}_q{}_rho{}",
            self.structure, self.n_train, self.p, self.q, self.rho
        )
    }

    fn box_options(&self) -> BoxOptions {
        BoxOptions::with_bound(self.m)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub per_method_losses: BTreeMap<Method, Vec<f64>>,
    pub per_method_mean_loss: BTreeMap<Method, f64>,
}

impl ScenarioReport {
    fn from_replications(config: ScenarioConfig, reps: Vec<BTreeMap<Method, f64>>) -> Self {
        let mut per_method_losses: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
        for rep in &reps {
            for (method, loss) in rep {
                per_method_losses.entry(*method).or_default().push(*loss);
            }
        }
        let per_method_mean_loss = per_method_losses
            .iter()
            .map(|(m, v)| (*m, v.iter().sum::<f64>() / v.len() as f64))
            .collect();
        Self {
            config,
            per_method_losses,
            per_method_mean_loss,
        }
    }

    pub fn mean(&self, method: Method) -> f64 {
        self.per_method_mean_loss[&method]
    }

    /// CSV rows `scenario,method,replication,loss`, grouped by method.
    pub fn write_csv<W: Write>(&self, writer: W, header: bool) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        if header {
            out.write_record(["scenario", "method", "replication", "loss"])?;
        }
        let id = self.config.scenario_id();
        for (method, losses) in &self.per_method_losses {
            for (rep, loss) in losses.iter().enumerate() {
                out.write_record([id.as_str(), method.name(), &rep.to_string(), &loss.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// RNG for replication `rep` of a scenario seeded with `seed`.
pub fn replication_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

pub fn gen_coefficients<R: Rng + ?Sized>(
    structure: Structure,
    p: usize,
    q: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if structure == Structure::GroupSparse && p < GROUP_ROWS {
        return Err(Error::InvalidConfig(format!(
            "group-sparse structure needs p >= {GROUP_ROWS}, got {p}"
        )));
    }
    let shared: Vec<f64> = (0..p)
        .map(|_| DENSE_SHARED_SD * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    let mut b = DMatrix::zeros(p, q);
    for k in 0..q {
        for j in 0..p {
            let tau: f64 = StandardNormal.sample(rng);
            b[(j, k)] = shared[j] + DENSE_OUTCOME_SD * tau;
        }
    }
    match structure {
        Structure::Dense => {}
        Structure::GroupSparse => {
            for j in GROUP_ROWS..p {
                b.row_mut(j).fill(0.0);
            }
        }
        Structure::EntrySparse => {
            for k in 0..q {
                for j in 0..p {
                    if rng.random_bool(ENTRY_ZERO_FRACTION) {
                        b[(j, k)] = 0.0;
                    }
                }
            }
        }
    }
    Ok(b)
}

/// `n x q` rows from `N(0, (1 - rho) I + rho 11')`.
pub fn sample_noise<R: Rng + ?Sized>(n: usize, q: usize, rho: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("rho must lie in [0, 1), got {rho}")));
    }
    let shared_sd = rho.sqrt();
    let own_sd = (1.0 - rho).sqrt();
    let mut out = DMatrix::zeros(n, q);
    for i in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        for k in 0..q {
            let w: f64 = StandardNormal.sample(rng);
            out[(i, k)] = shared_sd * z + own_sd * w;
        }
    }
    Ok(out)
}

fn standard_normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            out[(i, j)] = StandardNormal.sample(rng);
        }
    }
    out
}

/// Unconstrained weights for the study. A test point whose feature matrix
/// fails the conditioning check still gets the stationary point, so a single
/// near-zero covariate does not abort a whole scenario.
fn unconstrained_theta(quad: &RiskQuadratic, mode: SolveMode) -> Result<DVector<f64>> {
    match minimize_unconstrained(quad, mode) {
        Ok(sol) => Ok(sol.theta),
        Err(Error::IllPosed(_)) if quad.n_outcomes > quad.dim() => Ok(stationary_point(quad, mode)?.theta),
        Err(e) => Err(e),
    }
}

fn mean_squared_gap(truth: &DVector<f64>, pred: &DVector<f64>) -> f64 {
    truth
        .iter()
        .zip(pred.iter())
        .map(|(t, p)| (t - p).powi(2))
        .sum::<f64>()
        / truth.len() as f64
}

/// Drawn data for one replication.
struct Draw {
    b_true: DMatrix<f64>,
    fit: crate::ols::OlsFit,
    x_test: DMatrix<f64>,
}

fn draw<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<Draw> {
    cfg.validate()?;
    let b_true = gen_coefficients(cfg.structure, cfg.p, cfg.q, rng)?;
    let x = standard_normal_matrix(cfg.n_train, cfg.p, rng);
    let noise = sample_noise(cfg.n_train, cfg.q, cfg.rho, rng)?;
    let y = &x * &b_true + noise * cfg.noise_scale;
    let fit = fit_ols(&Dataset::new(x, y)?)?;
    let x_test = standard_normal_matrix(cfg.n_test, cfg.p, rng);
    Ok(Draw { b_true, fit, x_test })
}

/// Per-method test loss, averaged over the replication's test points.
pub fn run_replication<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<BTreeMap<Method, f64>> {
    let Draw { b_true, fit, x_test } = draw(cfg, rng)?;
    let predictor = ShrinkagePredictor::new(&fit);
    let oracle = OracleMoments::new(&fit, &b_true)?;
    let opts = cfg.box_options();

    let mut totals: BTreeMap<Method, f64> = Method::ALL.iter().map(|m| (*m, 0.0)).collect();
    for i in 0..cfg.n_test {
        let x0 = x_test.row(i).transpose();
        let truth = b_true.tr_mul(&x0);
        let empirical = predictor.quadratic(&x0)?;
        let oracle_quad = predictor.oracle_quadratic(&x0, &oracle)?;

        let thetas = [
            (Method::Ols, ols_theta(cfg.p)),
            (
                Method::CoolishUnconstrained,
                unconstrained_theta(&empirical, SolveMode::Unconstrained)?,
            ),
            (
                Method::CoolishConstrained,
                constrained_on(&empirical, &opts, None, SolveMode::Constrained { m: opts.m })
                    .or_else(Error::into_best_solution)?
                    .theta,
            ),
            (
                Method::OracleUnconstrained,
                unconstrained_theta(&oracle_quad, SolveMode::OracleUnconstrained)?,
            ),
            (
                Method::OracleConstrained,
                constrained_on(
                    &oracle_quad,
                    &opts,
                    None,
                    SolveMode::OracleConstrained { m: opts.m },
                )
                .or_else(Error::into_best_solution)?
                .theta,
            ),
        ];
        for (method, theta) in thetas {
            let pred = predictor.apply(&x0, &theta)?;
            *totals.get_mut(&method).unwrap() += mean_squared_gap(&truth, &pred);
        }
    }
    for v in totals.values_mut() {
        *v /= cfg.n_test as f64;
    }
    Ok(totals)
}

/// All replications of one scenario, run in parallel on the current rayon pool.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    cfg.validate()?;
    let reps = (0..cfg.n_replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, &mut replication_rng(cfg.seed, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioReport::from_replications(cfg.clone(), reps))
}

/// Distance between the feasible and oracle weights, averaged over test points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleGap {
    /// `||theta_hat - theta_star||_2` for the unconstrained pair.
    pub theta_distance: f64,
    /// `loss(theta_hat) - loss(theta_star)` for the unconstrained pair.
    pub loss_gap: f64,
    pub constrained_theta_distance: f64,
    pub constrained_loss_gap: f64,
}

pub fn oracle_gap_replication<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<OracleGap> {
    let Draw { b_true, fit, x_test } = draw(cfg, rng)?;
    let predictor = ShrinkagePredictor::new(&fit);
    let oracle = OracleMoments::new(&fit, &b_true)?;
    let opts = cfg.box_options();
    let mut acc = [0.0; 4];
    for i in 0..cfg.n_test {
        let x0 = x_test.row(i).transpose();
        let empirical = predictor.quadratic(&x0)?;
        let oracle_quad = predictor.oracle_quadratic(&x0, &oracle)?;
        let loss = |theta: &DVector<f64>| -> Result<f64> {
            Ok(mean_squared_gap(
                &b_true.tr_mul(&x0),
                &predictor.apply(&x0, theta)?,
            ))
        };

        let free = unconstrained_theta(&empirical, SolveMode::Unconstrained)?;
        let free_star = unconstrained_theta(&oracle_quad, SolveMode::OracleUnconstrained)?;
        let boxed = constrained_on(&empirical, &opts, None, SolveMode::Constrained { m: opts.m })
            .or_else(Error::into_best_solution)?
            .theta;
        let boxed_star = constrained_on(
            &oracle_quad,
            &opts,
            None,
            SolveMode::OracleConstrained { m: opts.m },
        )
        .or_else(Error::into_best_solution)?
        .theta;

        acc[0] += (&free - &free_star).norm();
        acc[1] += loss(&free)? - loss(&free_star)?;
        acc[2] += (&boxed - &boxed_star).norm();
        acc[3] += loss(&boxed)? - loss(&boxed_star)?;
    }
    let n = cfg.n_test as f64;
    Ok(OracleGap {
        theta_distance: acc[0] / n,
        loss_gap: acc[1] / n,
        constrained_theta_distance: acc[2] / n,
        constrained_loss_gap: acc[3] / n,
    })
}

pub fn oracle_gap_study(cfg: &ScenarioConfig) -> Result<Vec<OracleGap>> {
    cfg.validate()?;
    (0..cfg.n_replications)
        .into_par_iter()
        .map(|r| oracle_gap_replication(cfg, &mut replication_rng(cfg.seed, r)))
        .collect()
}
