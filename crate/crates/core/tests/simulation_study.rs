use coolish::simulation::{run_scenario, Method, ScenarioConfig, Structure};

fn config(structure: Structure, rho: f64) -> ScenarioConfig {
    ScenarioConfig {
        n_train: 100,
        n_test: 50,
        p: 5,
        q: 1000,
        rho,
        structure,
        n_replications: 100,
        seed: 17,
        ..ScenarioConfig::default()
    }
}

#[test]
fn constrained_beats_ols_in_most_replications() {
    let report = run_scenario(&config(Structure::Dense, 0.0)).unwrap();
    let ols = &report.per_method_losses[&Method::Ols];
    let boxed = &report.per_method_losses[&Method::CoolishConstrained];
    let wins = ols.iter().zip(boxed).filter(|(o, c)| c <= o).count();
    assert!(wins >= 90, "constrained won {wins} of 100");
}

#[test]
fn report_invariants_hold_for_every_structure() {
    for structure in [Structure::Dense, Structure::GroupSparse, Structure::EntrySparse] {
        let cfg = ScenarioConfig {
            n_replications: 12,
            q: 300,
            ..config(structure, 0.3)
        };
        let report = run_scenario(&cfg).unwrap();
        for method in Method::ALL {
            let losses = &report.per_method_losses[&method];
            assert_eq!(losses.len(), 12);
            assert!(losses.iter().all(|l| *l >= 0.0));
            let mean = losses.iter().sum::<f64>() / 12.0;
            assert!((report.mean(method) - mean).abs() <= 1e-12);
        }
        let ols = &report.per_method_losses[&Method::Ols];
        for method in [Method::OracleUnconstrained, Method::OracleConstrained] {
            for (o, l) in ols.iter().zip(&report.per_method_losses[&method]) {
                assert!(l <= o, "{structure}: {method:?}");
            }
        }
    }
}

#[test]
fn csv_has_one_row_per_method_and_replication() {
    let cfg = ScenarioConfig {
        n_replications: 7,
        q: 200,
        ..config(Structure::EntrySparse, 0.6)
    };
    let report = run_scenario(&cfg).unwrap();
    let mut buf = Vec::new();
    report.write_csv(&mut buf, true).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("scenario,method,replication,loss"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 7 * Method::ALL.len());
    for method in Method::ALL {
        let count = rows
            .iter()
            .filter(|r| r.split(',').nth(1) == Some(method.name()))
            .count();
        assert_eq!(count, 7);
    }
}

#[test]
fn seed_changes_results_and_repeats_exactly() {
    let cfg = ScenarioConfig {
        n_replications: 5,
        q: 200,
        ..config(Structure::Dense, 0.3)
    };
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    let c = run_scenario(&ScenarioConfig { seed: 18, ..cfg }).unwrap();
    assert_eq!(a.per_method_losses, b.per_method_losses);
    assert_ne!(a.per_method_losses, c.per_method_losses);
}
