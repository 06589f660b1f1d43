//! Coordinate-wise optimal linear shrinkage of OLS predictions in linear
//! regression with many outcomes sharing one design.
//!
//! For a new covariate vector `x0`, the OLS prediction of outcome `k` is
//! replaced by `theta0 + sum_j theta_j * x0_j * b_jk`, with `theta` chosen by
//! minimizing an unbiased estimate of the predictive risk averaged over
//! outcomes. `theta = (0, 1, ..., 1)` recovers OLS.
//!
//! ```
//! use coolish::{fit_ols, Dataset, ShrinkagePredictor, Rule, BoxOptions};
//! use nalgebra::{DMatrix, DVector};
//!
//! let x = DMatrix::from_fn(20, 2, |i, j| if j == 0 { 1.0 } else { i as f64 / 10.0 });
//! let y = DMatrix::from_fn(20, 30, |i, k| (i as f64 / 10.0) * (k % 3) as f64 + ((i * 7 + k) % 5) as f64 * 0.1);
//! let fit = fit_ols(&Dataset::new(x, y).unwrap()).unwrap();
//! let predictor = ShrinkagePredictor::new(&fit);
//! let x0 = DVector::from_vec(vec![1.0, 0.5]);
//! let pred = predictor.predict(&x0, &Rule::Constrained(BoxOptions::default())).unwrap();
//! assert_eq!(pred.len(), 30);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod genomics;
pub mod io;
pub mod ols;
pub mod shrinkage;
pub mod simulation;

pub use error::{Error, Result};
pub use ols::{fit_ols, Dataset, OlsFit, PredictiveMoments};
pub use shrinkage::{
    build_point, empirical_risk, predict_point, solve_constrained, solve_unconstrained, BoxOptions, Rule,
    ShrinkagePoint, ShrinkagePredictor, SolveMode, ThetaSolution,
};
pub use simulation::{run_scenario, Method, ScenarioConfig, ScenarioReport, Structure};
