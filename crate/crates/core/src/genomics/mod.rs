//! Expression-matrix preprocessing, probe-panel selection and imputation
//! scoring for cells x genes count data.

mod fixture;
mod impute;
mod kmeans;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

pub use fixture::{synthetic_pair, FixtureConfig};
pub use impute::{evaluate_imputation, ImputationResult};
pub use kmeans::{select_panel_kmeans, KMeansOptions, PanelSelection};

use crate::error::{Error, Result};
use crate::io;

/// Cells are scaled to this many counts.
pub const CPM_TOTAL: f64 = 1e6;
/// Pseudocount inside `log10(x + LOG_OFFSET)`.
pub const LOG_OFFSET: f64 = 1.01;
pub const DEFAULT_MIN_CELLS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    RawCounts,
    Cpm,
    LogTransformed,
}

#[derive(Debug, Clone)]
pub struct ExpressionMatrix {
    /// `cells x genes`.
    values: DMatrix<f64>,
    gene_ids: Vec<String>,
    stage: Stage,
}

impl ExpressionMatrix {
    pub fn new(values: DMatrix<f64>, gene_ids: Vec<String>, stage: Stage) -> Result<Self> {
        if values.ncols() != gene_ids.len() {
            return Err(Error::shape("gene id count", values.ncols(), gene_ids.len()));
        }
        let mut seen = HashSet::with_capacity(gene_ids.len());
        for id in &gene_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate gene id `{id}`")));
            }
        }
        if stage != Stage::LogTransformed {
            if let Some(idx) = values.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
                let (cell, gene) = (idx % values.nrows(), idx / values.nrows());
                return Err(Error::InvalidConfig(format!(
                    "cell {cell}, gene `{}`: value {} is not a non-negative number",
                    gene_ids[gene],
                    values[(cell, gene)]
                )));
            }
        }
        Ok(Self {
            values,
            gene_ids,
            stage,
        })
    }

    /// Read a cells x genes CSV (first row gene ids, optionally gzip-compressed).
    pub fn read_csv(path: &Path) -> Result<Self> {
        let table = io::read_table(path, io::Header::Required)?;
        let header = table.header.unwrap_or_default();
        Self::new(table.values, header, Stage::RawCounts).map_err(|e| Error::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn n_cells(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_genes(&self) -> usize {
        self.values.ncols()
    }

    fn require(&self, expected: Stage) -> Result<()> {
        if self.stage != expected {
            return Err(Error::StageError {
                expected,
                found: self.stage,
            });
        }
        Ok(())
    }

    /// Keep the listed genes, in the listed order.
    pub fn select_genes(&self, ids: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = self
            .gene_ids
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();
        let cols = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::InvalidConfig(format!("gene `{id}` not present")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            values: self.values.select_columns(&cols),
            gene_ids: ids.to_vec(),
            stage: self.stage,
        })
    }

    /// Number of cells with a nonzero count, per gene.
    pub fn detection_counts(&self) -> Vec<usize> {
        self.values
            .column_iter()
            .map(|col| col.iter().filter(|v| **v != 0.0).count())
            .collect()
    }
}

/// Scale every cell to `CPM_TOTAL` counts.
pub fn cpm_normalize(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    m.require(Stage::RawCounts)?;
    let mut values = m.values.clone();
    for (cell, mut row) in values.row_iter_mut().enumerate() {
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyCell(cell));
        }
        row *= CPM_TOTAL / total;
    }
    Ok(ExpressionMatrix {
        values,
        gene_ids: m.gene_ids.clone(),
        stage: Stage::Cpm,
    })
}

/// `log10(x + 1.01)` elementwise.
pub fn log_transform(m: &ExpressionMatrix) -> Result<ExpressionMatrix> {
    m.require(Stage::Cpm)?;
    Ok(ExpressionMatrix {
        values: m.values.map(|x| (x + LOG_OFFSET).log10()),
        gene_ids: m.gene_ids.clone(),
        stage: Stage::LogTransformed,
    })
}

/// Genes detected in at least `min_cells` cells of both matrices, in the
/// gene order of `a`.
pub fn filter_genes(a: &ExpressionMatrix, b: &ExpressionMatrix, min_cells: usize) -> Result<Vec<String>> {
    a.require(Stage::RawCounts)?;
    b.require(Stage::RawCounts)?;
    let kept_in_b: HashSet<&str> = b
        .gene_ids
        .iter()
        .zip(b.detection_counts())
        .filter(|(_, count)| *count >= min_cells)
        .map(|(id, _)| id.as_str())
        .collect();
    Ok(a.gene_ids
        .iter()
        .zip(a.detection_counts())
        .filter(|(id, count)| *count >= min_cells && kept_in_b.contains(id.as_str()))
        .map(|(id, _)| id.clone())
        .collect())
}

/// Filter, normalize and log-transform a pair of raw count matrices onto a
/// shared gene set.
pub fn preprocess_pair(
    a: &ExpressionMatrix,
    b: &ExpressionMatrix,
    min_cells: usize,
) -> Result<(ExpressionMatrix, ExpressionMatrix)> {
    let genes = filter_genes(a, b, min_cells)?;
    let prep = |m: &ExpressionMatrix| -> Result<ExpressionMatrix> {
        log_transform(&cpm_normalize(&m.select_genes(&genes)?)?)
    };
    Ok((prep(a)?, prep(b)?))
}
