use mgnc_core::data::{index_all, IndexedExample};
use mgnc_core::embedding::{make_ccnn_group, EmbeddingGroup};
use mgnc_core::math::{l2_norm, Matrix};
use mgnc_core::model::{Mode, ModelParams};
use mgnc_core::regularization::{ConstraintTarget, Lambda, RegularizationSpec, UNBOUNDED};
use mgnc_core::synthetic::{make_synthetic, SyntheticSizes, SyntheticTask};
use mgnc_core::train::{train_observed, History, TrainConfig};
use mgnc_core::vocab::{Vocabulary, PAD};
use mgnc_core::Rng;

struct Fixture {
    train: Vec<IndexedExample>,
    dev: Vec<IndexedExample>,
    groups: Vec<EmbeddingGroup<f64>>,
    vocab: Vocabulary,
}

fn fixture(dims: &[usize]) -> Fixture {
    let sizes = SyntheticSizes {
        train: 120,
        dev: 40,
        test: 10,
        dims: dims.to_vec(),
    };
    let data = make_synthetic(SyntheticTask::Separable, &sizes, &mut Rng::new(5)).unwrap();
    let vocab = data.vocabulary().unwrap();
    Fixture {
        train: index_all(&data.train, &vocab).unwrap(),
        dev: index_all(&data.dev, &vocab).unwrap(),
        groups: data.groups(&vocab).unwrap(),
        vocab,
    }
}

fn small_config() -> TrainConfig {
    TrainConfig {
        heights: vec![2, 3],
        maps: 6,
        batch_size: 16,
        epochs: 3,
        ..TrainConfig::default()
    }
}

fn model(groups: Vec<EmbeddingGroup<f64>>, seed: u64) -> ModelParams<f64> {
    let config = small_config().model_config(2, 0.5);
    ModelParams::init(groups, config, &mut Rng::new(seed)).unwrap()
}

/// Parameters after every batch, plus the history.
fn trajectory(
    f: &Fixture,
    groups: Vec<EmbeddingGroup<f64>>,
    spec: &RegularizationSpec,
    seed: u64,
) -> (Vec<ModelParams<f64>>, History) {
    let mut rng = Rng::new(seed);
    let params = ModelParams::init(groups, small_config().model_config(2, spec.dropout), &mut rng).unwrap();
    let mut steps = Vec::new();
    let (_, history) = train_observed(
        params,
        &f.train,
        Some(&f.dev),
        &small_config(),
        spec,
        &mut rng,
        |event| steps.push(event.params.clone()),
    )
    .unwrap();
    (steps, history)
}

fn ids(f: &Fixture) -> Vec<u32> {
    f.train[0].ids.clone()
}

#[test]
fn perturbing_one_group_leaves_the_other_groups_features_unchanged() {
    let f = fixture(&[4, 6]);
    let params = model(f.groups.clone(), 1);
    let before = params.forward(&ids(&f), Mode::Test).unwrap();
    let mut changed = params.clone();
    for v in changed.groups_mut()[1].table_mut().data_mut().iter_mut().skip(6) {
        *v += 0.3;
    }
    for hf in &mut changed.banks_mut()[1].heights {
        hf.weights.data_mut().iter_mut().for_each(|w| *w = -*w + 0.1);
    }
    let after = changed.forward(&ids(&f), Mode::Test).unwrap();
    assert_eq!(
        before.group_features(&params, 0),
        after.group_features(&changed, 0)
    );
    assert_ne!(
        before.group_features(&params, 1),
        after.group_features(&changed, 1)
    );
}

#[test]
fn permuting_filters_permutes_their_features() {
    let f = fixture(&[5]);
    let params = model(f.groups.clone(), 2);
    let maps = small_config().maps;
    let perm: Vec<usize> = (0..maps).rev().collect();
    let mut permuted = params.clone();
    {
        let hf = &mut permuted.banks_mut()[0].heights[1];
        let orig = params.banks()[0].heights[1].clone();
        let cols = orig.weights.cols();
        hf.weights = Matrix::from_fn(maps, cols, |r, c| orig.weights.get(perm[r], c));
        hf.biases = perm.iter().map(|&p| orig.biases[p]).collect();
    }
    let a = params.forward(&ids(&f), Mode::Test).unwrap().features;
    let b = permuted.forward(&ids(&f), Mode::Test).unwrap().features;
    assert_eq!(a[..maps], b[..maps]);
    for (i, &p) in perm.iter().enumerate() {
        assert_eq!(b[maps + i], a[maps + p]);
    }
}

#[test]
fn feature_vector_length_matches_construction() {
    let f = fixture(&[4, 6, 3]);
    let params = model(f.groups.clone(), 3);
    let trace = params.forward(&ids(&f), Mode::Test).unwrap();
    assert_eq!(trace.features.len(), 3 * 2 * 6);
    let bounds = &params.classifier().boundaries;
    assert_eq!(bounds, &[0..12, 12..24, 24..36]);
}

#[test]
fn first_forward_pass_is_class_uniform() {
    let f = fixture(&[4]);
    let probs = model(f.groups.clone(), 4).predict(&ids(&f)).unwrap();
    assert_eq!(probs, vec![0.5, 0.5]);
}

#[test]
fn dropout_free_training_pass_equals_an_unscaled_test_pass() {
    let f = fixture(&[4, 4]);
    let mut params = model(f.groups.clone(), 5);
    for w in params.classifier_mut().weights.data_mut() {
        *w = 0.25;
    }
    params.set_dropout(0.0).unwrap();
    let test = params.forward(&ids(&f), Mode::Test).unwrap();
    let train = params
        .forward(
            &ids(&f),
            Mode::Train {
                mask: None,
                limit: None,
            },
        )
        .unwrap();
    assert_eq!(test.logits, train.logits);
}

#[test]
fn test_mode_forward_is_deterministic() {
    let f = fixture(&[4]);
    let params = model(f.groups.clone(), 6);
    let a = params.forward(&ids(&f), Mode::Test).unwrap();
    let b = params.forward(&ids(&f), Mode::Test).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_group_mg_training_matches_cnn_exactly() {
    let f = fixture(&[5]);
    let single = RegularizationSpec::weights(Lambda::Single(3.0));
    let per_group = RegularizationSpec::weights(Lambda::PerGroup(vec![3.0]));
    let cnn = trajectory(&f, f.groups.clone(), &single, 11);
    let mg = trajectory(&f, f.groups.clone(), &per_group, 11);
    assert!(!cnn.0.is_empty());
    assert_eq!(cnn, mg);
}

#[test]
fn unbounded_mgnc_training_matches_unbounded_mg_exactly() {
    let f = fixture(&[4, 6]);
    let mg = RegularizationSpec::weights(Lambda::Single(UNBOUNDED));
    let mgnc = RegularizationSpec::weights(Lambda::PerGroup(vec![UNBOUNDED; 2]));
    assert_eq!(
        trajectory(&f, f.groups.clone(), &mg, 12),
        trajectory(&f, f.groups.clone(), &mgnc, 12)
    );
}

#[test]
fn ccnn_forward_equals_cnn_on_the_concatenated_table() {
    let f = fixture(&[3, 4]);
    let merged = make_ccnn_group(&f.groups).unwrap();
    let concatenated = Matrix::from_fn(merged.vocab_size(), 7, |r, c| {
        if c < 3 {
            f.groups[0].table().get(r, c)
        } else {
            f.groups[1].table().get(r, c - 3)
        }
    });
    let manual = EmbeddingGroup::new("manual", concatenated, true, &f.vocab).unwrap();
    let a = model(vec![merged], 13);
    let b = model(vec![manual], 13);
    for e in &f.train[..10] {
        assert_eq!(
            a.forward(&e.ids, Mode::Test).unwrap().logits,
            b.forward(&e.ids, Mode::Test).unwrap().logits
        );
    }
}

#[test]
fn padding_rows_stay_zero_through_training() {
    let f = fixture(&[4, 5]);
    let spec = RegularizationSpec::weights(Lambda::PerGroup(vec![3.0, 3.0]));
    let (steps, _) = trajectory(&f, f.groups.clone(), &spec, 14);
    for params in &steps {
        for g in params.groups() {
            assert!(g.table().row(PAD as usize).iter().all(|&v| v == 0.0));
        }
    }
    let last = steps.last().unwrap();
    assert_ne!(
        last.groups()[0].table(),
        f.groups[0].table(),
        "embeddings were fine-tuned"
    );
}

#[test]
fn identical_seeds_give_identical_histories() {
    let f = fixture(&[4, 5]);
    let spec = RegularizationSpec::weights(Lambda::PerGroup(vec![1.0, 9.0]));
    let a = trajectory(&f, f.groups.clone(), &spec, 15);
    let b = trajectory(&f, f.groups.clone(), &spec, 15);
    assert_eq!(a.1, b.1);
    assert_eq!(a.0.last(), b.0.last());
    let c = trajectory(&f, f.groups.clone(), &spec, 16);
    assert_ne!(a.1, c.1);
}

#[test]
fn weight_segments_obey_their_bounds_after_every_batch() {
    let f = fixture(&[4, 5]);
    let lambda = [0.02, 0.05];
    let spec = RegularizationSpec::weights(Lambda::PerGroup(lambda.to_vec()));
    let mut config = small_config();
    config.epochs = 5;
    let mut rng = Rng::new(17);
    let params = ModelParams::init(f.groups.clone(), config.model_config(2, 0.5), &mut rng).unwrap();
    let mut batches = 0;
    let mut binding = false;
    train_observed(params, &f.train, None, &config, &spec, &mut rng, |event| {
        batches += 1;
        let c = event.params.classifier();
        for row in 0..c.weights.rows() {
            for (range, &bound) in c.boundaries.iter().zip(&lambda) {
                let norm = l2_norm(&c.weights.row(row)[range.clone()]).unwrap();
                assert!(norm <= bound + 1e-9, "segment norm {norm} above {bound}");
                binding |= norm > bound - 1e-6;
            }
        }
    })
    .unwrap();
    assert_eq!(batches, 5 * 8);
    assert!(binding, "the bound never became active");
}

#[test]
fn activation_segments_obey_their_bounds_at_the_classifier_input() {
    let f = fixture(&[4, 5]);
    let lambda = [0.05, 0.1];
    let spec = RegularizationSpec {
        target: ConstraintTarget::Activations,
        ..RegularizationSpec::weights(Lambda::PerGroup(lambda.to_vec()))
    };
    let config = small_config();
    let mut rng = Rng::new(18);
    let params = ModelParams::init(f.groups.clone(), config.model_config(2, 0.5), &mut rng).unwrap();
    let mut clipped = 0;
    train_observed(params, &f.train, None, &config, &spec, &mut rng, |event| {
        let bounds = &event.params.classifier().boundaries;
        for trace in event.traces {
            for ((range, &bound), &scale) in bounds.iter().zip(&lambda).zip(&trace.scales) {
                let norm = l2_norm(&trace.classifier_input[range.clone()]).unwrap();
                assert!(norm <= bound, "activation norm {norm} above {bound}");
                clipped += usize::from(scale < 1.0);
            }
        }
    })
    .unwrap();
    assert!(clipped > 0, "the bound never became active");
}
