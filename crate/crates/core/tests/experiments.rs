use abac::algorithms::Algorithm;
use abac::env::GarnetSpec;
use abac::experiment::{execute, run_experiment, ExperimentConfig, ExperimentKind, RunOutcome};

fn small(kind: ExperimentKind) -> ExperimentConfig {
    ExperimentConfig {
        kind,
        garnet: GarnetSpec::new(8, 3, 2, 0.1),
        algorithms: vec![Algorithm::Abtd, Algorithm::Abpbe, Algorithm::StaticAc],
        num_features: vec![3],
        horizon: 5_000,
        eval_interval: 1_000,
        repeats: 5,
        seed: 17,
        ..ExperimentConfig::default()
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn results_do_not_depend_on_worker_count() {
    for kind in [ExperimentKind::Garnet, ExperimentKind::MtsVsSts] {
        let cfg = small(kind);
        let one = with_threads(1, || execute(&cfg).unwrap());
        let four = with_threads(4, || execute(&cfg).unwrap());
        assert_eq!(format!("{one:?}"), format!("{four:?}"));
    }
}

fn read_csv(path: &std::path::Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(2)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn aggregates_match_recomputed_mean_and_standard_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        output: dir.path().to_path_buf(),
        ..small(ExperimentKind::Garnet)
    };
    let RunOutcome::Experiment(manifest) = run_experiment(&cfg).unwrap() else {
        panic!("expected an experiment");
    };
    for series in &manifest.series {
        let root = dir.path().join(&series.name);
        let repeats: Vec<Vec<Vec<f64>>> = (0..cfg.repeats)
            .map(|i| read_csv(&root.join(format!("repeat_{i:03}.csv"))))
            .collect();
        let aggregate = read_csv(&root.join("aggregate.csv"));
        assert_eq!(aggregate.len(), repeats[0].len());
        for (row, agg) in aggregate.iter().enumerate() {
            assert_eq!(agg[0], repeats[0][row][0]);
            assert_eq!(agg[1], cfg.repeats as f64);
            for col in 1..repeats[0][row].len() {
                let values: Vec<f64> = repeats.iter().map(|r| r[row][col]).collect();
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
                let se = (var / n).sqrt();
                let (m, s) = (agg[2 * col], agg[2 * col + 1]);
                assert!((m - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{} row {row} col {col}", series.name);
                assert!((s - se).abs() <= 1e-12 * se.max(1.0), "{} row {row} col {col}", series.name);
            }
        }
    }
}

#[test]
fn paired_series_share_instances() {
    let cfg = small(ExperimentKind::Garnet);
    let outcomes = execute(&cfg).unwrap();
    let instance_seeds: Vec<Vec<u64>> = outcomes
        .iter()
        .map(|o| match &o.repeats {
            abac::experiment::SeriesRepeats::Garnet(r) => r.iter().map(|r| r.instance_seed).collect(),
            abac::experiment::SeriesRepeats::Car(_) => unreachable!(),
        })
        .collect();
    assert!(instance_seeds.windows(2).all(|w| w[0] == w[1]));
}
