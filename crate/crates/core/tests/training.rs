use dkepool::data::make_folds;
use dkepool::pooling::PoolKind;
use dkepool::testing::parity_dataset;
use dkepool::train::{init_model, run_cv, run_cv_with, RunOptions, TrainConfig};
use dkepool::Error;

fn quick(pool: PoolKind) -> TrainConfig {
    TrainConfig {
        folds: 2,
        epochs: 5,
        ..TrainConfig::for_pool(pool)
    }
}

#[test]
fn separable_fixture_is_learned() {
    let ds = parity_dataset(320);
    // embeddings are near-constant within a graph, so injected noise would
    // dominate the covariance
    let config = TrainConfig {
        snr_db: None,
        ..quick(PoolKind::DkepoolRobust)
    };
    let report = run_cv(&ds, &config).unwrap();
    assert_eq!(report.per_fold_accuracy, vec![1.0, 1.0]);
    assert!(report.is_consistent());
}

#[test]
fn every_pool_kind_trains_on_the_fixture() {
    let ds = parity_dataset(24);
    for kind in PoolKind::ALL {
        let report = run_cv(&ds, &quick(kind)).unwrap_or_else(|e| panic!("{kind}: {e}"));
        assert_eq!(report.per_fold_accuracy.len(), 2, "{kind}");
        assert!(report.mean.is_finite(), "{kind}");
    }
}

#[test]
fn loss_decreases() {
    let ds = parity_dataset(40);
    let config = TrainConfig {
        folds: 2,
        epochs: 20,
        ..TrainConfig::default()
    };
    let run = run_cv_with(&ds, &config, RunOptions::default()).unwrap();
    for fold in &run.folds {
        let l = &fold.epoch_losses;
        let head: f64 = l[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = l[l.len() - 5..].iter().sum::<f64>() / 5.0;
        assert!(head > tail, "fold {}: {head} vs {tail}", fold.fold);
    }
}

#[test]
fn leave_one_out_accuracies_are_binary() {
    let ds = parity_dataset(8);
    let config = TrainConfig {
        folds: 8,
        epochs: 2,
        ..TrainConfig::default()
    };
    let report = run_cv(&ds, &config).unwrap();
    assert_eq!(report.per_fold_accuracy.len(), 8);
    assert!(report.per_fold_accuracy.iter().all(|&a| a == 0.0 || a == 1.0));
}

#[test]
fn serial_and_parallel_runs_agree() {
    let ds = parity_dataset(20);
    let config = TrainConfig {
        folds: 4,
        epochs: 3,
        seed: 5,
        ..TrainConfig::default()
    };
    let a = run_cv_with(&ds, &config, RunOptions { parallel: false }).unwrap();
    let b = run_cv_with(&ds, &config, RunOptions { parallel: true }).unwrap();
    assert_eq!(a.report.without_timing().to_json(), b.report.without_timing().to_json());
    let c = run_cv_with(&ds, &config, RunOptions { parallel: false }).unwrap();
    assert_eq!(a.report.without_timing().to_json(), c.report.without_timing().to_json());
}

#[test]
fn fold_initialisation_depends_only_on_seed_and_fold() {
    let ds = parity_dataset(20);
    let config = TrainConfig {
        folds: 4,
        epochs: 2,
        ..TrainConfig::default()
    };
    let run = run_cv_with(&ds, &config, RunOptions::default()).unwrap();
    for f in &run.folds {
        assert_eq!(f.initial_fingerprint, init_model(&config, &ds, f.fold).unwrap().fingerprint());
    }
    let prints: std::collections::BTreeSet<_> = run.folds.iter().map(|f| &f.initial_fingerprint).collect();
    assert_eq!(prints.len(), 4);
    // a different dataset with the same shape yields the same initial model
    let other = parity_dataset(30);
    assert_eq!(
        init_model(&config, &ds, 2).unwrap().fingerprint(),
        init_model(&config, &other, 2).unwrap().fingerprint()
    );
}

#[test]
fn seed_changes_results() {
    let ds = parity_dataset(20);
    let base = TrainConfig {
        folds: 2,
        epochs: 1,
        ..TrainConfig::default()
    };
    let other = TrainConfig { seed: 9, ..base.clone() };
    assert_ne!(
        init_model(&base, &ds, 0).unwrap().fingerprint(),
        init_model(&other, &ds, 0).unwrap().fingerprint()
    );
    assert_ne!(make_folds(&ds, 2, 0).unwrap(), make_folds(&ds, 2, 9).unwrap());
}

#[test]
fn invalid_config_is_rejected_before_training() {
    let ds = parity_dataset(10);
    let config = TrainConfig {
        d: 123,
        ..TrainConfig::default()
    };
    assert!(matches!(run_cv(&ds, &config), Err(Error::Config(_))));
}

#[test]
fn diverging_fold_aborts_with_partial_report() {
    let ds = parity_dataset(20);
    let config = TrainConfig {
        folds: 2,
        epochs: 3,
        pool: PoolKind::Sum,
        snr_db: None,
        learning_rate: 1e300,
        ..TrainConfig::default()
    };
    let err = run_cv_with(&ds, &config, RunOptions { parallel: false }).unwrap_err();
    match &err {
        Error::FoldAborted { fold, partial, .. } => {
            assert_eq!(*fold, 0);
            assert!(partial.per_fold_accuracy.is_empty());
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.is_numeric_error());
}
