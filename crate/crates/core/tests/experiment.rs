use mgnc_core::data::{index_all, make_splits, IndexedExample, SplitStrategy};
use mgnc_core::experiment::{
    cross_validate, grid_search, repeat_runs, Experiment, Sequential, TrialData, Variant,
};
use mgnc_core::synthetic::{make_synthetic, SyntheticSizes, SyntheticTask};
use mgnc_core::train::TrainConfig;
use mgnc_core::Rng;

fn setup(variant: Variant) -> (Experiment<f64>, Vec<IndexedExample>, Vec<IndexedExample>) {
    let sizes = SyntheticSizes {
        train: 60,
        dev: 30,
        test: 10,
        dims: vec![4, 3],
    };
    let data = make_synthetic(SyntheticTask::GroupInformative, &sizes, &mut Rng::new(8)).unwrap();
    let vocab = data.vocabulary().unwrap();
    let config = TrainConfig {
        heights: vec![2, 3],
        maps: 4,
        batch_size: 20,
        epochs: 2,
        ..TrainConfig::default()
    };
    let groups = data.groups(&vocab).unwrap();
    let experiment = Experiment::new(variant, groups, config, 2).unwrap();
    (
        experiment,
        index_all(&data.train, &vocab).unwrap(),
        index_all(&data.dev, &vocab).unwrap(),
    )
}

#[test]
fn mgnc_grid_covers_the_full_product_and_ignores_enumeration_order() {
    let (experiment, train, dev) = setup(Variant::Mgnc);
    let grid = [0.01, 1.0, 9.0];
    let forward = grid_search(&experiment, &train, &dev, &grid, 2, 0, None, &Sequential).unwrap();
    let reversed: Vec<f64> = grid.iter().rev().copied().collect();
    let backward = grid_search(&experiment, &train, &dev, &reversed, 2, 0, None, &Sequential).unwrap();
    assert_eq!(forward.points.len(), 9);
    assert_eq!(forward.evaluations(), 18);
    assert_eq!(forward.best, backward.best);
    assert_eq!(forward.best_score, backward.best_score);
    assert_eq!(forward.best.len(), 2);
    let best_score = forward
        .points
        .iter()
        .filter_map(|p| p.score)
        .fold(f64::MIN, f64::max);
    assert_eq!(forward.best_score, best_score);
}

#[test]
fn single_lambda_variants_search_one_value_at_a_time() {
    for variant in [Variant::Mg, Variant::Ccnn] {
        let (experiment, train, dev) = setup(variant);
        let outcome = grid_search(&experiment, &train, &dev, &[1.0, 3.0], 1, 0, None, &Sequential).unwrap();
        assert_eq!(outcome.points.len(), 2);
        assert!(outcome.points.iter().all(|p| p.lambda.len() == 1));
    }
}

#[test]
fn repeat_runs_summarises_its_trials() {
    let (experiment, train, dev) = setup(Variant::Mg);
    let data = TrialData {
        train: &train,
        dev: Some(&dev),
        eval: &dev,
    };
    let outcome = repeat_runs(&experiment, data, &[3.0], 4, 10, &Sequential).unwrap();
    assert_eq!(outcome.summary.n, 4);
    let seeds: Vec<u64> = outcome.trials.iter().map(|t| t.seed).collect();
    assert_eq!(seeds, [10, 11, 12, 13]);
    let mean = outcome.trials.iter().map(|t| t.value).sum::<f64>() / 4.0;
    assert!((mean - outcome.summary.mean).abs() <= 1e-12);
    assert!(outcome.summary.min <= outcome.summary.mean && outcome.summary.mean <= outcome.summary.max);

    let one = repeat_runs(&experiment, data, &[3.0], 1, 10, &Sequential).unwrap();
    assert_eq!(one.summary.min, one.summary.max);
    assert_eq!(one.summary.mean, one.trials[0].value);
}

#[test]
fn cross_validation_scores_every_fold_once() {
    let (experiment, train, dev) = setup(Variant::Mg);
    let all: Vec<IndexedExample> = train.into_iter().chain(dev).collect();
    let plan = make_splits(all.len(), SplitStrategy::kfold(3), 4).unwrap();
    let outcome = cross_validate(&experiment, &all, &plan, &[1.0, 9.0], 1, 0, &Sequential).unwrap();
    assert_eq!(outcome.folds.len(), 3);
    assert_eq!(outcome.summary.n, 3);
    assert_eq!(outcome.grid_trials.len(), 3 * 2);
    for fold in &outcome.folds {
        assert!((0.0..=1.0).contains(&fold.test.value));
        assert_eq!(fold.test.fold, Some(fold.fold));
    }
    let again = cross_validate(&experiment, &all, &plan, &[1.0, 9.0], 1, 0, &Sequential).unwrap();
    assert_eq!(outcome, again);
}

#[test]
fn cnn_rejects_several_groups() {
    let sizes = SyntheticSizes {
        train: 5,
        dev: 5,
        test: 5,
        dims: vec![2, 2],
    };
    let data = make_synthetic(SyntheticTask::Separable, &sizes, &mut Rng::new(1)).unwrap();
    let groups = data.groups::<f64>(&data.vocabulary().unwrap()).unwrap();
    assert!(Experiment::new(Variant::Cnn, groups, TrainConfig::default(), 2).is_err());
}
