//! K-means over genes (each gene is a point in cell space) and selection of
//! the gene nearest each centroid as a probe.

use rand::Rng;
use rayon::prelude::*;

use super::{ExpressionMatrix, Stage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Stop when the relative change in inertia falls below this.
    pub rel_tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            rel_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelSelection {
    /// One gene index per cluster, in cluster order.
    pub panel_indices: Vec<usize>,
    pub k: usize,
    /// Cluster id of every gene.
    pub assignments: Vec<usize>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct Points<'a> {
    data: &'a [f64],
    dim: usize,
    len: usize,
}

impl Points<'_> {
    fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_plus_plus<R: Rng + ?Sized>(points: &Points<'_>, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut chosen = vec![false; points.len];
    let first = rng.random_range(0..points.len);
    chosen[first] = true;
    let mut centroids = vec![points.get(first).to_vec()];
    let mut d2: Vec<f64> = (0..points.len)
        .into_par_iter()
        .map(|i| sq_dist(points.get(i), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, d) in d2.iter().enumerate() {
                if *d <= 0.0 {
                    continue;
                }
                target -= d;
                pick = Some(i);
                if target <= 0.0 {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every remaining point coincides with a centroid
            let free: Vec<usize> = (0..points.len).filter(|i| !chosen[*i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let centroid = points.get(pick).to_vec();
        d2.par_iter_mut().enumerate().for_each(|(i, d)| {
            *d = d.min(sq_dist(points.get(i), &centroid));
        });
        centroids.push(centroid);
    }
    centroids
}

/// Assign points to their nearest centroid, then move a point into every empty
/// cluster: the point farthest from the empty centroid's position, taken from
/// a cluster that keeps at least one member.
fn assign(points: &Points<'_>, centroids: &mut [Vec<f64>]) -> (Vec<usize>, f64) {
    let nearest_all: Vec<(usize, f64)> = (0..points.len)
        .into_par_iter()
        .map(|i| nearest(points.get(i), centroids))
        .collect();
    let mut labels: Vec<usize> = nearest_all.iter().map(|(c, _)| *c).collect();
    let mut sizes = vec![0usize; centroids.len()];
    for &c in &labels {
        sizes[c] += 1;
    }
    for empty in 0..centroids.len() {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..points.len)
            .filter(|&i| sizes[labels[i]] > 1)
            .map(|i| (i, sq_dist(points.get(i), &centroids[empty])))
            .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = donor {
            sizes[labels[i]] -= 1;
            labels[i] = empty;
            sizes[empty] = 1;
            centroids[empty] = points.get(i).to_vec();
        }
    }
    let inertia = (0..points.len)
        .map(|i| sq_dist(points.get(i), &centroids[labels[i]]))
        .sum();
    (labels, inertia)
}

fn update(points: &Points<'_>, labels: &[usize], centroids: &mut [Vec<f64>]) {
    let mut sums = vec![vec![0.0; points.dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(points.get(i)) {
            *s += v;
        }
    }
    for ((centroid, sum), count) in centroids.iter_mut().zip(sums).zip(counts) {
        if count > 0 {
            *centroid = sum.into_iter().map(|s| s / count as f64).collect();
        }
    }
}

/// Cluster the genes of a log-transformed matrix into `k` groups and return
/// the gene closest to each centroid (ties go to the lower gene index).
pub fn select_panel_kmeans<R: Rng + ?Sized>(
    train: &ExpressionMatrix,
    k: usize,
    opts: &KMeansOptions,
    rng: &mut R,
) -> Result<PanelSelection> {
    train.require(Stage::LogTransformed)?;
    let n_genes = train.n_genes();
    if k == 0 || k > n_genes {
        return Err(Error::InvalidConfig(format!(
            "panel size K = {k} must lie in 1..={n_genes} (the number of genes)"
        )));
    }
    if k == n_genes {
        return Ok(PanelSelection {
            panel_indices: (0..n_genes).collect(),
            k,
            assignments: (0..n_genes).collect(),
        });
    }

    // column-major storage: gene g occupies one contiguous slice
    let points = Points {
        data: train.values().as_slice(),
        dim: train.n_cells(),
        len: n_genes,
    };
    let mut centroids = kmeans_plus_plus(&points, k, rng);
    let (mut labels, mut inertia) = assign(&points, &mut centroids);
    for _ in 0..opts.max_iter {
        update(&points, &labels, &mut centroids);
        let (next_labels, next_inertia) = assign(&points, &mut centroids);
        let change = (inertia - next_inertia).abs();
        labels = next_labels;
        let converged = change <= opts.rel_tol * inertia.max(f64::MIN_POSITIVE);
        inertia = next_inertia;
        if converged {
            break;
        }
    }

    let mut best: Vec<Option<(usize, f64)>> = vec![None; k];
    for (gene, &c) in labels.iter().enumerate() {
        let d = sq_dist(points.get(gene), &centroids[c]);
        match best[c] {
            Some((_, bd)) if bd <= d => {}
            _ => best[c] = Some((gene, d)),
        }
    }
    let panel_indices = best
        .into_iter()
        .enumerate()
        .map(|(c, b)| {
            b.map(|(g, _)| g)
                .ok_or_else(|| Error::InvalidConfig(format!("cluster {c} ended empty")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PanelSelection {
        panel_indices,
        k,
        assignments: labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn log_matrix(values: DMatrix<f64>) -> ExpressionMatrix {
        let ids = (0..values.ncols()).map(|i| format!("g{i}")).collect();
        ExpressionMatrix::new(values, ids, Stage::LogTransformed).unwrap()
    }

    #[test]
    fn k_equal_genes_is_identity() {
        let m = log_matrix(DMatrix::from_fn(4, 5, |i, j| (i * j) as f64));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sel = select_panel_kmeans(&m, 5, &KMeansOptions::default(), &mut rng).unwrap();
        assert_eq!(sel.panel_indices, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn separated_groups_get_one_probe_each() {
        // genes 0..5 near 0, genes 5..10 near 10
        let m = log_matrix(DMatrix::from_fn(6, 10, |i, j| {
            let base = if j < 5 { 0.0 } else { 10.0 };
            base + 0.01 * ((i * 3 + j * 7) % 5) as f64
        }));
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sel = select_panel_kmeans(&m, 2, &KMeansOptions::default(), &mut rng).unwrap();
            let low = sel.panel_indices.iter().filter(|g| **g < 5).count();
            assert_eq!(low, 1, "seed {seed}: {:?}", sel.panel_indices);
            for (c, &g) in sel.panel_indices.iter().enumerate() {
                assert_eq!(sel.assignments[g], c);
            }
        }
    }

    #[test]
    fn duplicate_points_still_yield_k_distinct_genes() {
        // only two distinct gene profiles but K = 4
        let m = log_matrix(DMatrix::from_fn(
            3,
            8,
            |i, j| if j % 2 == 0 { i as f64 } else { 5.0 },
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sel = select_panel_kmeans(&m, 4, &KMeansOptions::default(), &mut rng).unwrap();
        let distinct: HashSet<_> = sel.panel_indices.iter().collect();
        assert_eq!(distinct.len(), 4);
    }

    #[test]
    fn rejects_wrong_stage_and_k() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let raw = ExpressionMatrix::new(DMatrix::from_element(2, 2, 1.0), ids, Stage::RawCounts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            select_panel_kmeans(&raw, 1, &KMeansOptions::default(), &mut rng),
            Err(Error::StageError { .. })
        ));
        let m = log_matrix(DMatrix::from_element(2, 2, 1.0));
        assert!(select_panel_kmeans(&m, 3, &KMeansOptions::default(), &mut rng).is_err());
        assert!(select_panel_kmeans(&m, 0, &KMeansOptions::default(), &mut rng).is_err());
    }
}
