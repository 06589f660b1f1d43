use std::io::Write;

use coolish::genomics::{
    evaluate_imputation, filter_genes, preprocess_pair, select_panel_kmeans, synthetic_pair,
    ExpressionMatrix, FixtureConfig, KMeansOptions, Stage,
};
use coolish::shrinkage::{BoxOptions, Rule};
use coolish::simulation::replication_rng;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::DMatrix;

fn rules() -> Vec<Rule> {
    vec![
        Rule::Ols,
        Rule::Unconstrained,
        Rule::Constrained(BoxOptions::default()),
    ]
}

#[test]
fn large_synthetic_panel_favours_constrained_rule() {
    let cfg = FixtureConfig {
        genes: 3100,
        cells_a: 800,
        cells_b: 780,
        modules: 20,
        seed: 31,
        ..FixtureConfig::default()
    };
    let (a, b) = synthetic_pair(&cfg).unwrap();
    let (train, test) = preprocess_pair(&a, &b, 300).unwrap();
    assert!(train.n_genes() > 2800, "{} genes kept", train.n_genes());
    let panel =
        select_panel_kmeans(&train, 30, &KMeansOptions::default(), &mut replication_rng(1, 30)).unwrap();
    let results = evaluate_imputation(&train, &test, &panel, &rules(), true).unwrap();
    let mse = |name: &str| results.iter().find(|r| r.rule == name).unwrap().mse.unwrap();
    assert!(mse("coolish-constrained") <= mse("ols"), "{results:?}");
    assert!(results.iter().all(|r| r.seconds >= 0.0));
}

#[test]
fn filter_returns_exactly_the_constructed_set() {
    // detection counts per gene: a = [5, 4, 2, 5], b = [5, 5, 5, 3]
    let a = DMatrix::from_fn(5, 4, |i, g| if i < [5, 4, 2, 5][g] { 1.0 } else { 0.0 });
    let b = DMatrix::from_fn(6, 4, |i, g| if i < [5, 5, 5, 3][g] { 2.0 } else { 0.0 });
    let ids: Vec<String> = ["w", "x", "y", "z"].iter().map(|s| s.to_string()).collect();
    let a = ExpressionMatrix::new(a, ids.clone(), Stage::RawCounts).unwrap();
    // b lists the genes in a different order
    let b_ids: Vec<String> = ["z", "y", "x", "w"].iter().map(|s| s.to_string()).collect();
    let b = ExpressionMatrix::new(b.select_columns(&[3, 2, 1, 0]), b_ids, Stage::RawCounts).unwrap();
    assert_eq!(
        filter_genes(&a, &b, 4).unwrap(),
        vec!["w".to_string(), "x".to_string()]
    );
    assert_eq!(filter_genes(&a, &b, 5).unwrap(), vec!["w".to_string()]);
    assert_eq!(filter_genes(&a, &b, 2).unwrap(), ids);
}

#[test]
fn imputation_error_ignores_outcome_gene_order() {
    let cfg = FixtureConfig {
        genes: 120,
        seed: 2,
        ..FixtureConfig::default()
    };
    let (a, b) = synthetic_pair(&cfg).unwrap();
    let (train, test) = preprocess_pair(&a, &b, 300).unwrap();
    let panel =
        select_panel_kmeans(&train, 10, &KMeansOptions::default(), &mut replication_rng(0, 10)).unwrap();
    let base = evaluate_imputation(&train, &test, &panel, &rules(), true).unwrap();

    // reverse the gene order and remap the panel
    let g = train.n_genes();
    let order: Vec<usize> = (0..g).rev().collect();
    let permute = |m: &ExpressionMatrix| {
        let ids = order.iter().map(|i| m.gene_ids()[*i].clone()).collect();
        ExpressionMatrix::new(m.values().select_columns(&order), ids, Stage::LogTransformed).unwrap()
    };
    let mut moved = panel.clone();
    moved.panel_indices = panel.panel_indices.iter().map(|i| g - 1 - i).collect();
    moved.assignments = order.iter().map(|i| panel.assignments[*i]).collect();
    let swapped = evaluate_imputation(&permute(&train), &permute(&test), &moved, &rules(), true).unwrap();
    for (x, y) in base.iter().zip(&swapped) {
        let (x, y) = (x.mse.unwrap(), y.mse.unwrap());
        assert!((x - y).abs() <= 1e-10 * x, "{x} vs {y}");
        assert!(x >= 0.0);
    }
}

#[test]
fn panel_is_deterministic_and_consistent() {
    let (a, b) = synthetic_pair(&FixtureConfig::default()).unwrap();
    let (train, _) = preprocess_pair(&a, &b, 300).unwrap();
    for k in [14, 65, 198] {
        let first =
            select_panel_kmeans(&train, k, &KMeansOptions::default(), &mut replication_rng(4, k)).unwrap();
        let again =
            select_panel_kmeans(&train, k, &KMeansOptions::default(), &mut replication_rng(4, k)).unwrap();
        assert_eq!(first, again);
        assert_eq!(first.assignments.len(), train.n_genes());
        for (cluster, &gene) in first.panel_indices.iter().enumerate() {
            assert_eq!(first.assignments[gene], cluster);
        }
    }
}

#[test]
fn gzip_expression_csv_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("expr.csv.gz");
    let mut enc = GzEncoder::new(std::fs::File::create(&path).unwrap(), Compression::default());
    enc.write_all(b"g1,g2,g3\n0,4,1\n2,0,7\n").unwrap();
    enc.finish().unwrap();
    let m = ExpressionMatrix::read_csv(&path).unwrap();
    assert_eq!(m.gene_ids(), ["g1", "g2", "g3"]);
    assert_eq!(m.stage(), Stage::RawCounts);
    assert_eq!(m.values()[(1, 2)], 7.0);
}
