//! Synthetic pair of count matrices with module-structured expression.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use super::{ExpressionMatrix, Stage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub genes: usize,
    pub cells_a: usize,
    pub cells_b: usize,
    /// Number of co-expression modules driving the genes.
    pub modules: usize,
    /// Fraction of genes expressed so rarely that a 300-cell filter drops them.
    pub rare_fraction: f64,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            genes: 400,
            cells_a: 360,
            cells_b: 380,
            modules: 12,
            rare_fraction: 0.05,
            seed: 0,
        }
    }
}

struct GeneModel {
    base: f64,
    loadings: Vec<f64>,
}

fn draw_counts(
    genes: &[GeneModel],
    cells: usize,
    modules: usize,
    shift: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let mut out = DMatrix::zeros(cells, genes.len());
    for i in 0..cells {
        let factors: Vec<f64> = (0..modules).map(|_| StandardNormal.sample(&mut *rng)).collect();
        for (g, model) in genes.iter().enumerate() {
            let eta = model.base
                + shift
                + model
                    .loadings
                    .iter()
                    .zip(&factors)
                    .map(|(l, f)| l * f)
                    .sum::<f64>();
            let rate = eta.exp().min(1e6);
            let poisson = Poisson::new(rate).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            out[(i, g)] = poisson.sample(&mut *rng);
        }
    }
    // guarantee every cell has at least one count
    for i in 0..cells {
        if out.row(i).iter().all(|v| *v == 0.0) {
            out[(i, 0)] = 1.0;
        }
    }
    Ok(out)
}

/// Two raw count matrices over the same genes, standing in for two datasets
/// of the same tissue.
pub fn synthetic_pair(cfg: &FixtureConfig) -> Result<(ExpressionMatrix, ExpressionMatrix)> {
    if cfg.genes == 0 || cfg.cells_a == 0 || cfg.cells_b == 0 || cfg.modules == 0 {
        return Err(Error::InvalidConfig("fixture dimensions must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.rare_fraction) {
        return Err(Error::InvalidConfig(format!(
            "rare fraction must lie in [0, 1), got {}",
            cfg.rare_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let loading = Normal::new(0.0, 0.15).expect("valid normal");
    let genes: Vec<GeneModel> = (0..cfg.genes)
        .map(|g| {
            let rare = rng.random_bool(cfg.rare_fraction);
            let module = g % cfg.modules;
            let base = if rare { -4.0 } else { rng.random_range(1.5..3.5) };
            let loadings = (0..cfg.modules)
                .map(|m| {
                    let own = if m == module { 0.7 } else { 0.0 };
                    own + loading.sample(&mut rng)
                })
                .collect();
            GeneModel { base, loadings }
        })
        .collect();
    let ids: Vec<String> = (0..cfg.genes).map(|g| format!("GENE{g:05}")).collect();
    let a = draw_counts(&genes, cfg.cells_a, cfg.modules, 0.0, &mut rng)?;
    let b = draw_counts(&genes, cfg.cells_b, cfg.modules, 0.2, &mut rng)?;
    Ok((
        ExpressionMatrix::new(a, ids.clone(), Stage::RawCounts)?,
        ExpressionMatrix::new(b, ids, Stage::RawCounts)?,
    ))
}
