use std::time::Instant;

use nalgebra::DMatrix;

use super::{ExpressionMatrix, PanelSelection, Stage};
use crate::error::{Error, Result};
use crate::ols::{fit_ols, Dataset};
use crate::shrinkage::{Rule, ShrinkagePredictor};

/// Score of one rule on one panel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationResult {
    pub rule: &'static str,
    pub k: usize,
    /// Mean squared error over test cells and imputed genes; `None` when the
    /// rule could not be applied (message in `error`).
    pub mse: Option<f64>,
    pub seconds: f64,
    pub error: Option<String>,
}

fn design(m: &ExpressionMatrix, panel: &[usize], intercept: bool) -> DMatrix<f64> {
    let offset = usize::from(intercept);
    DMatrix::from_fn(m.n_cells(), panel.len() + offset, |i, j| {
        if intercept && j == 0 {
            1.0
        } else {
            m.values()[(i, panel[j - offset])]
        }
    })
}

/// Fit on `train` with the panel genes as predictors and every other gene as
/// an outcome, then score each rule on `test`.
pub fn evaluate_imputation(
    train: &ExpressionMatrix,
    test: &ExpressionMatrix,
    panel: &PanelSelection,
    rules: &[Rule],
    intercept: bool,
) -> Result<Vec<ImputationResult>> {
    for m in [train, test] {
        if m.stage() != Stage::LogTransformed {
            return Err(Error::StageError {
                expected: Stage::LogTransformed,
                found: m.stage(),
            });
        }
    }
    if train.gene_ids() != test.gene_ids() {
        return Err(Error::InvalidConfig(
            "training and test matrices must share the same genes in the same order".into(),
        ));
    }
    let n_genes = train.n_genes();
    if let Some(bad) = panel.panel_indices.iter().find(|g| **g >= n_genes) {
        return Err(Error::shape("panel gene index", format!("< {n_genes}"), bad));
    }
    let mut is_panel = vec![false; n_genes];
    for &g in &panel.panel_indices {
        is_panel[g] = true;
    }
    let outcomes: Vec<usize> = (0..n_genes).filter(|g| !is_panel[*g]).collect();
    if outcomes.is_empty() {
        return Err(Error::InvalidConfig(
            "panel covers every gene; nothing to impute".into(),
        ));
    }

    let started = Instant::now();
    let x_train = design(train, &panel.panel_indices, intercept);
    let y_train = train.values().select_columns(&outcomes);
    let fit = fit_ols(&Dataset::new(x_train, y_train)?)?;
    let predictor = ShrinkagePredictor::new(&fit);
    let fit_seconds = started.elapsed().as_secs_f64();

    let x_test = design(test, &panel.panel_indices, intercept);
    let y_test = test.values().select_columns(&outcomes);
    let cells = y_test.nrows() as f64;
    let genes_out = y_test.ncols() as f64;

    Ok(rules
        .iter()
        .map(|rule| {
            let started = Instant::now();
            let outcome = predictor.predict_batch(&x_test, rule);
            let seconds = fit_seconds + started.elapsed().as_secs_f64();
            match outcome {
                Ok(pred) => ImputationResult {
                    rule: rule.name(),
                    k: panel.k,
                    mse: Some((&y_test - pred).norm_squared() / (cells * genes_out)),
                    seconds,
                    error: None,
                },
                Err(e) => ImputationResult {
                    rule: rule.name(),
                    k: panel.k,
                    mse: None,
                    seconds,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shrinkage::BoxOptions;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn log_matrix(values: DMatrix<f64>) -> ExpressionMatrix {
        let ids = (0..values.ncols()).map(|i| format!("g{i}")).collect();
        ExpressionMatrix::new(values, ids, Stage::LogTransformed).unwrap()
    }

    fn panel(indices: Vec<usize>, genes: usize) -> PanelSelection {
        PanelSelection {
            k: indices.len(),
            panel_indices: indices,
            assignments: vec![0; genes],
        }
    }

    fn rules() -> Vec<Rule> {
        vec![
            Rule::Ols,
            Rule::Unconstrained,
            Rule::Constrained(BoxOptions::default()),
        ]
    }

    #[test]
    fn in_span_target_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let make = |rng: &mut ChaCha8Rng, cells: usize| {
            DMatrix::from_fn(cells, 10, |_, _| StandardNormal.sample(rng))
        };
        let fill = |mut m: DMatrix<f64>| {
            // genes 3..10 are fixed combinations of genes 0..3
            for i in 0..m.nrows() {
                for g in 3..10 {
                    let gf = g as f64;
                    let w = [gf.sin(), (1.7 * gf).cos(), gf.ln()];
                    let c = 2.0 + gf * gf / 10.0;
                    m[(i, g)] = c + w[0] * m[(i, 0)] + w[1] * m[(i, 1)] + w[2] * m[(i, 2)];
                }
            }
            m
        };
        let train = log_matrix(fill(make(&mut rng, 40)));
        let test = log_matrix(fill(make(&mut rng, 25)));
        let results = evaluate_imputation(&train, &test, &panel(vec![0, 1, 2], 10), &rules(), true).unwrap();
        for r in results {
            assert!(r.mse.unwrap() < 1e-16, "{}: {:?} {:?}", r.rule, r.mse, r.error);
        }
    }

    #[test]
    fn ols_error_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let train = log_matrix(DMatrix::from_fn(50, 12, |_, _| StandardNormal.sample(&mut rng)));
        let test = log_matrix(DMatrix::from_fn(30, 12, |_, _| StandardNormal.sample(&mut rng)));
        let sel = panel(vec![4, 1], 12);
        let results = evaluate_imputation(&train, &test, &sel, &[Rule::Ols], false).unwrap();

        let outcomes: Vec<usize> = (0..12).filter(|g| *g != 4 && *g != 1).collect();
        let x = train.values().select_columns(&[4, 1]);
        let y = train.values().select_columns(&outcomes);
        let b = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * y;
        let xt = test.values().select_columns(&[4, 1]);
        let yt = test.values().select_columns(&outcomes);
        let direct = (yt - xt * b).norm_squared() / (30.0 * 10.0);
        assert!((results[0].mse.unwrap() - direct).abs() < 1e-10);
    }

    #[test]
    fn too_few_outcomes_fails_per_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train = log_matrix(DMatrix::from_fn(30, 5, |_, _| StandardNormal.sample(&mut rng)));
        let test = train.clone();
        // intercept + 3 panel genes = 4 features, only 2 outcomes
        let results = evaluate_imputation(&train, &test, &panel(vec![0, 1, 2], 5), &rules(), true).unwrap();
        assert!(results[0].mse.is_some());
        assert!(results[1].mse.is_none());
        assert!(results[1].error.as_deref().unwrap().contains("constrained"));
        assert!(results[2].mse.is_some());
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let a = log_matrix(DMatrix::from_element(5, 3, 1.0));
        let raw = ExpressionMatrix::new(
            DMatrix::from_element(5, 3, 1.0),
            (0..3).map(|i| format!("g{i}")).collect(),
            Stage::RawCounts,
        )
        .unwrap();
        assert!(matches!(
            evaluate_imputation(&a, &raw, &panel(vec![0], 3), &rules(), true),
            Err(Error::StageError { .. })
        ));
    }
}
