//! Acceptance suite: prints one `[PASS]` or `[FAIL]` line per criterion and
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mgnc::embeddings_io::{
    load_text_vectors, load_word2vec_binary, write_text_vectors, write_word2vec_binary,
};
use mgnc::output::{format_lambda, parse_lambda};
use mgnc::parallel::Runner;
use mgnc::Error;
use mgnc_core::data::{index_all, IndexedExample};
use mgnc_core::embedding::{make_ccnn_group, EmbeddingGroup};
use mgnc_core::experiment::{grid_search, repeat_runs, Experiment, Sequential, TrialData, Variant};
use mgnc_core::gradcheck::{gradient_check, GradCheckConfig};
use mgnc_core::math::{l2_norm, Matrix};
use mgnc_core::metrics::auc;
use mgnc_core::model::{convolve, Mode, ModelParams};
use mgnc_core::regularization::{ConstraintTarget, Lambda, RegularizationSpec, DEFAULT_LAMBDA_GRID};
use mgnc_core::synthetic::{make_synthetic, SyntheticData, SyntheticSizes, SyntheticTask};
use mgnc_core::train::{train_observed, TrainConfig};
use mgnc_core::vocab::Vocabulary;
use mgnc_core::Rng;

type Check = std::result::Result<String, String>;
type Criterion<'a> = (&'a str, Box<dyn Fn() -> Check>);

macro_rules! require {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, limit: Duration) -> Check {
    let took = start.elapsed();
    require!(took < limit, "took {took:.1?}, limit {limit:?}");
    Ok(format!("{took:.1?}"))
}

struct Task {
    train: Vec<IndexedExample>,
    dev: Vec<IndexedExample>,
    test: Vec<IndexedExample>,
    groups: Vec<EmbeddingGroup<f64>>,
    vocab: Vocabulary,
}

fn task(kind: SyntheticTask, sizes: (usize, usize, usize), dims: &[usize], seed: u64) -> Task {
    let sizes = SyntheticSizes {
        train: sizes.0,
        dev: sizes.1,
        test: sizes.2,
        dims: dims.to_vec(),
    };
    let data: SyntheticData = make_synthetic(kind, &sizes, &mut Rng::new(seed)).unwrap();
    let vocab = data.vocabulary().unwrap();
    Task {
        train: index_all(&data.train, &vocab).unwrap(),
        dev: index_all(&data.dev, &vocab).unwrap(),
        test: index_all(&data.test, &vocab).unwrap(),
        groups: data.groups(&vocab).unwrap(),
        vocab,
    }
}

fn gradients() -> Check {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for target in [ConstraintTarget::ClassifierWeights, ConstraintTarget::Activations] {
        let config = GradCheckConfig {
            target,
            ..GradCheckConfig::default()
        };
        let report = gradient_check(&config).map_err(|e| e.to_string())?;
        let classes = report.by_class();
        for class in [
            "classifier_weights",
            "classifier_bias",
            "filter_weights",
            "filter_biases",
            "embeddings",
        ] {
            require!(classes.contains_key(class), "{target:?}: {class} was not checked");
        }
        require!(
            report.passed(),
            "{target:?}: max relative error {:.3e}",
            report.max_rel_error()
        );
        if target == ConstraintTarget::Activations {
            require!(report.constraint_active, "activation bound never became active");
        }
        worst = worst.max(report.max_rel_error());
    }
    let took = within(start, Duration::from_secs(60))?;
    Ok(format!("both modes, max relative error {worst:.2e}, {took}"))
}

fn naive_convolve(a: &Matrix<f64>, w: &Matrix<f64>, b: f64) -> Vec<f64> {
    (0..=a.rows() - w.rows())
        .map(|j| {
            let mut sum = b;
            for r in 0..w.rows() {
                for c in 0..w.cols() {
                    sum += a.get(j + r, c) * w.get(r, c);
                }
            }
            sum
        })
        .collect()
}

fn convolution() -> Check {
    let mut rng = Rng::new(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let h = 1 + rng.below(5);
        let d = 1 + rng.below(12);
        let s = h + rng.below(20);
        let a = Matrix::from_fn(s, d, |_, _| rng.uniform_in(-2.0, 2.0));
        let w = Matrix::from_fn(h, d, |_, _| rng.uniform_in(-2.0, 2.0));
        let b = rng.uniform_in(-1.0, 1.0);
        let fast = convolve(&a, &w, b).map_err(|e| e.to_string())?;
        let slow = naive_convolve(&a, &w, b);
        require!(
            fast.len() == slow.len(),
            "length {} vs {}",
            fast.len(),
            slow.len()
        );
        for (x, y) in fast.iter().zip(&slow) {
            worst = worst.max((x - y).abs() / y.abs().max(1e-300));
        }
    }
    require!(worst <= 1e-12, "relative difference {worst:.2e}");
    Ok(format!("100 instances, max relative difference {worst:.1e}"))
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        heights: vec![2, 3],
        maps: 6,
        batch_size: 16,
        epochs,
        ..TrainConfig::default()
    }
}

/// Parameters after every batch plus the final history.
fn trajectory(
    t: &Task,
    groups: Vec<EmbeddingGroup<f64>>,
    spec: &RegularizationSpec,
    seed: u64,
) -> Vec<ModelParams<f64>> {
    let config = small_config(3);
    let mut rng = Rng::new(seed);
    let params = ModelParams::init(groups, config.model_config(2, spec.dropout), &mut rng).unwrap();
    let mut steps = Vec::new();
    let (last, history) = train_observed(params, &t.train, Some(&t.dev), &config, spec, &mut rng, |e| {
        steps.push(e.params.clone())
    })
    .unwrap();
    steps.push(last);
    assert!(!history.epochs.is_empty());
    steps
}

fn reductions() -> Check {
    let single = task(SyntheticTask::Separable, (120, 40, 10), &[5], 5);
    let cnn = trajectory(
        &single,
        single.groups.clone(),
        &RegularizationSpec::weights(Lambda::Single(3.0)),
        11,
    );
    let mg = trajectory(
        &single,
        single.groups.clone(),
        &RegularizationSpec::weights(Lambda::PerGroup(vec![3.0])),
        11,
    );
    require!(cnn == mg, "MG-CNN with one group diverged from CNN");

    let two = task(SyntheticTask::Separable, (120, 40, 10), &[4, 6], 5);
    let mg = trajectory(
        &two,
        two.groups.clone(),
        &RegularizationSpec::weights(Lambda::Single(1e9)),
        12,
    );
    let mgnc = trajectory(
        &two,
        two.groups.clone(),
        &RegularizationSpec::weights(Lambda::PerGroup(vec![1e9; 2])),
        12,
    );
    require!(mg == mgnc, "MGNC with unbounded groups diverged from MG");

    let merged = make_ccnn_group(&two.groups).map_err(|e| e.to_string())?;
    let (d0, d1) = (two.groups[0].dim(), two.groups[1].dim());
    let table = Matrix::from_fn(merged.vocab_size(), d0 + d1, |r, c| {
        if c < d0 {
            two.groups[0].table().get(r, c)
        } else {
            two.groups[1].table().get(r, c - d0)
        }
    });
    let manual = EmbeddingGroup::new("manual", table, true, &two.vocab).map_err(|e| e.to_string())?;
    let config = small_config(1).model_config(2, 0.5);
    let a = ModelParams::init(vec![merged], config.clone(), &mut Rng::new(13)).unwrap();
    let b = ModelParams::init(vec![manual], config, &mut Rng::new(13)).unwrap();
    for e in &two.train {
        let (x, y) = (
            a.forward(&e.ids, Mode::Test).unwrap(),
            b.forward(&e.ids, Mode::Test).unwrap(),
        );
        require!(
            x.logits == y.logits,
            "C-CNN forward differs from CNN on the concatenated matrix"
        );
    }
    Ok(format!(
        "{} batch states compared bit-exactly",
        cnn.len() + mg.len()
    ))
}

fn norm_invariant() -> Check {
    let t = task(SyntheticTask::Separable, (200, 40, 10), &[4, 5], 6);
    let lambda = [0.02, 0.05];
    let config = small_config(5);
    let spec = RegularizationSpec::weights(Lambda::PerGroup(lambda.to_vec()));
    let mut rng = Rng::new(17);
    let params = ModelParams::init(t.groups.clone(), config.model_config(2, 0.5), &mut rng).unwrap();
    let (mut batches, mut worst, mut violations) = (0, 0.0f64, 0);
    train_observed(params, &t.train, None, &config, &spec, &mut rng, |event| {
        batches += 1;
        let c = event.params.classifier();
        for row in 0..c.weights.rows() {
            for (range, &bound) in c.boundaries.iter().zip(&lambda) {
                let norm = l2_norm(&c.weights.row(row)[range.clone()]).unwrap();
                worst = worst.max(norm / bound);
                violations += usize::from(norm > bound + 1e-9);
            }
        }
    })
    .map_err(|e| e.to_string())?;
    require!(violations == 0, "{violations} weight segments above their bound");

    let spec = RegularizationSpec {
        target: ConstraintTarget::Activations,
        ..RegularizationSpec::weights(Lambda::PerGroup(vec![0.05, 0.1]))
    };
    let mut rng = Rng::new(18);
    let params = ModelParams::init(t.groups.clone(), config.model_config(2, 0.5), &mut rng).unwrap();
    let (mut passes, mut clipped, mut bad) = (0, 0, 0);
    train_observed(params, &t.train, None, &config, &spec, &mut rng, |event| {
        let bounds = &event.params.classifier().boundaries;
        for trace in event.traces {
            passes += 1;
            for ((range, &bound), &scale) in bounds.iter().zip(&[0.05, 0.1]).zip(&trace.scales) {
                let norm = l2_norm(&trace.classifier_input[range.clone()]).unwrap();
                bad += usize::from(norm > bound);
                clipped += usize::from(scale < 1.0);
            }
        }
    })
    .map_err(|e| e.to_string())?;
    require!(bad == 0, "{bad} activation segments above their bound");
    require!(clipped > 0, "activation bound never became active");
    Ok(format!(
        "{batches} batches (largest segment norm {:.6} of its bound), {passes} forward passes",
        worst
    ))
}

fn learnability() -> Check {
    let t = task(SyntheticTask::Separable, (500, 100, 100), &[20, 20], 21);
    let mut lines = Vec::new();
    for variant in Variant::ALL {
        let start = Instant::now();
        let groups = if variant == Variant::Cnn {
            vec![t.groups[0].clone()]
        } else {
            t.groups.clone()
        };
        let config = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        let exp = Experiment::new(variant, groups, config, 2).map_err(|e| e.to_string())?;
        let lambda = vec![3.0; exp.lambda_arity()];
        let acc = exp
            .run_trial(&t.train, Some(&t.dev), &t.test, &lambda, 1)
            .map_err(|e| e.to_string())?;
        within(start, Duration::from_secs(60)).map_err(|e| format!("{variant}: {e}"))?;
        require!(acc >= 0.95, "{variant} reached only {acc:.3} test accuracy");
        lines.push(format!("{} {:.1}%", variant.display_name(), acc * 100.0));
    }
    Ok(lines.join(", "))
}

fn group_regularization() -> Check {
    let start = Instant::now();
    let runner = Runner::new(4).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        maps: 25,
        epochs: 5,
        ..TrainConfig::default()
    };
    let (mut mgnc_sum, mut mg_sum) = (0.0, 0.0);
    let seeds = 10;
    for seed in 0..seeds {
        let t = task(
            SyntheticTask::GroupInformative,
            (300, 200, 10),
            &[20, 20],
            100 + seed,
        );
        for (variant, sum, points) in [(Variant::Mgnc, &mut mgnc_sum, 36), (Variant::Mg, &mut mg_sum, 6)] {
            let exp =
                Experiment::new(variant, t.groups.clone(), config.clone(), 2).map_err(|e| e.to_string())?;
            let out = grid_search(
                &exp,
                &t.train,
                &t.dev,
                &DEFAULT_LAMBDA_GRID,
                1,
                seed,
                None,
                &runner,
            )
            .map_err(|e| e.to_string())?;
            require!(
                out.points.len() == points && out.points.iter().all(|p| p.score.is_some()),
                "{variant} grid search evaluated {} of {points} points",
                out.points.iter().filter(|p| p.score.is_some()).count()
            );
            *sum += out.best_score;
        }
    }
    let (mgnc, mg) = (mgnc_sum / seeds as f64, mg_sum / seeds as f64);
    require!(
        mgnc >= mg - 0.01,
        "MGNC mean dev {mgnc:.4} below MG {mg:.4} by more than a point"
    );
    let took = within(start, Duration::from_secs(15 * 60))?;
    Ok(format!(
        "mean dev MGNC {:.2}% vs MG {:.2}% over {seeds} seeds, 36-point grid complete, {took}",
        mgnc * 100.0,
        mg * 100.0
    ))
}

fn brute_force_auc(scores: &[f64], labels: &[usize]) -> f64 {
    let (mut ordered, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                ordered += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    ordered / pairs
}

fn auc_oracle() -> Check {
    let mut rng = Rng::new(7);
    let mut instances = 0;
    while instances < 1000 {
        let n = 2 + rng.below(49);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(8) as f64 / 4.0).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(2)).collect();
        if !(labels.contains(&0) && labels.contains(&1)) {
            continue;
        }
        let fast = auc(&scores, &labels).map_err(|e| e.to_string())?;
        let slow = brute_force_auc(&scores, &labels);
        require!(
            fast == slow,
            "auc {fast} vs brute force {slow} on {scores:?} / {labels:?}"
        );
        instances += 1;
    }
    Ok("1000 instances with ties, exact agreement".into())
}

fn mgnc(args: &[&str]) -> std::result::Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mgnc"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    require!(
        out.status.success(),
        "mgnc {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(())
}

fn read(path: &Path) -> std::result::Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn determinism(dir: &Path) -> Check {
    let data = dir.join("data");
    let p = |p: &Path| p.to_str().unwrap().to_owned();
    mgnc(&[
        "synth",
        "--train-size",
        "150",
        "--dev-size",
        "50",
        "--test-size",
        "50",
        "--dims",
        "8,8",
        "--out",
        &p(&data),
    ])?;
    let config = p(&data.join("experiment.json"));
    let small = [
        "--maps",
        "8",
        "--epochs",
        "2",
        "--heights",
        "2,3",
        "--lambda-grid",
        "1,3,9",
        "--repetitions",
        "2",
    ];
    let mut compared = 0;
    for command in ["train", "gridsearch", "cv"] {
        let runs: Vec<_> = ["seq1", "seq2", "par"]
            .iter()
            .map(|n| dir.join(command).join(n))
            .collect();
        for (run, threads) in runs.iter().zip(["1", "1", "4"]) {
            let mut args = vec![
                command,
                "--config",
                &config,
                "--parallel",
                threads,
                "--folds",
                "3",
            ];
            let out = p(run);
            args.extend(["--out", &out]);
            args.extend(small);
            mgnc(&args)?;
        }
        let files: &[&str] = match command {
            "train" => &["results.csv", "summary.csv", "history.csv", "checkpoint.bin"],
            "gridsearch" => &[
                "grid_trials.csv",
                "grid.csv",
                "best_lambda.json",
                "results.csv",
                "summary.csv",
            ],
            _ => &[
                "grid_trials.csv",
                "best_lambda.json",
                "results.csv",
                "summary.csv",
            ],
        };
        for file in files {
            let first = read(&runs[0].join(file))?;
            require!(
                first == read(&runs[1].join(file))?,
                "{command}: sequential runs differ in {file}"
            );
            require!(
                first == read(&runs[2].join(file))?,
                "{command}: parallel run differs in {file}"
            );
            compared += 1;
        }
    }
    Ok(format!(
        "train, gridsearch and cv: {compared} outputs byte-identical across 2 sequential and 1 parallel run"
    ))
}

fn loaders(dir: &Path) -> Check {
    let mut rng = Rng::new(9);
    let records: Vec<(String, Vec<f32>)> = (0..300)
        .map(|i| {
            (
                format!("w{i}"),
                (0..13).map(|_| rng.uniform_in(-5.0, 5.0) as f32).collect(),
            )
        })
        .collect();
    let vocab = Vocabulary::from_tokens(records.iter().map(|(t, _)| t.as_str())).unwrap();
    let bin = dir.join("v.bin");
    let txt = dir.join("v.txt");
    write_word2vec_binary(&bin, &records, true).map_err(|e| e.to_string())?;
    write_text_vectors(&txt, &records, true).map_err(|e| e.to_string())?;
    let groups = [
        load_word2vec_binary::<f32>(&bin, "b", &vocab, &mut Rng::new(0)).map_err(|e| e.to_string())?,
        load_text_vectors::<f32>(&txt, "t", &vocab, &mut Rng::new(0)).map_err(|e| e.to_string())?,
    ];
    for g in &groups {
        for (token, v) in &records {
            let row = g.table().row(vocab.get(token).unwrap() as usize);
            require!(
                row.iter().zip(v).all(|(a, b)| a.to_bits() == b.to_bits()),
                "{}: {token} not bit-exact",
                g.name()
            );
        }
    }

    let expect_format =
        |result: mgnc::Result<EmbeddingGroup<f32>>, needle: &str| -> std::result::Result<(), String> {
            match result {
                Err(e @ Error::Format { .. }) if e.to_string().contains(needle) => Ok(()),
                other => Err(format!(
                    "expected a format error mentioning {needle:?}, got {other:?}"
                )),
            }
        };
    let bytes = read(&bin)?;
    let cut = dir.join("cut.bin");
    std::fs::write(&cut, &bytes[..bytes.len() - 7]).map_err(|e| e.to_string())?;
    expect_format(
        load_word2vec_binary(&cut, "b", &vocab, &mut Rng::new(0)),
        "record 300 of 300",
    )?;
    std::fs::write(&cut, b"12 abc\n").map_err(|e| e.to_string())?;
    expect_format(
        load_word2vec_binary(&cut, "b", &vocab, &mut Rng::new(0)),
        "malformed header",
    )?;
    let bad = dir.join("bad.txt");
    std::fs::write(&bad, "w0 1 2 3\nw1 1 2\n").map_err(|e| e.to_string())?;
    expect_format(load_text_vectors(&bad, "t", &vocab, &mut Rng::new(0)), "line 2")?;
    Ok("word2vec and text round trips bit-exact; truncated, malformed and ragged files rejected".into())
}

fn protocol_shape(dir: &Path) -> Check {
    let t = task(SyntheticTask::Separable, (200, 50, 50), &[6, 6], 3);
    let exp =
        Experiment::new(Variant::Mgnc, t.groups.clone(), small_config(4), 2).map_err(|e| e.to_string())?;
    let data = TrialData {
        train: &t.train,
        dev: Some(&t.dev),
        eval: &t.test,
    };
    let runs = repeat_runs(&exp, data, &[3.0, 9.0], 3, 0, &Sequential).map_err(|e| e.to_string())?;
    let cell = runs.summary.cell();
    let shape = |cell: &str| -> bool {
        let Some((mean, rest)) = cell.split_once(" (") else {
            return false;
        };
        let Some((min, max)) = rest.strip_suffix(')').and_then(|r| r.split_once(',')) else {
            return false;
        };
        [mean, min, max]
            .iter()
            .all(|v| v.parse::<f64>().is_ok() && v.split_once('.').is_some_and(|(_, d)| d.len() == 2))
    };
    require!(shape(&cell), "summary cell {cell:?} is not \"mean (min,max)\"");

    let summary =
        std::fs::read_to_string(dir.join("gridsearch/seq1/summary.csv")).map_err(|e| e.to_string())?;
    let last = summary.lines().last().unwrap_or_default();
    let table_cell = last
        .rsplit_once(",\"")
        .map(|(_, c)| c.trim_end_matches('"'))
        .unwrap_or_default();
    require!(
        shape(table_cell),
        "summary.csv cell {table_cell:?} is not \"mean (min,max)\""
    );

    let grid =
        std::fs::read_to_string(dir.join("gridsearch/seq1/best_lambda.json")).map_err(|e| e.to_string())?;
    let json: serde_json::Value = serde_json::from_str(&grid).map_err(|e| e.to_string())?;
    let best = json["rows"][0]["best_lambda"]
        .as_str()
        .unwrap_or_default()
        .to_owned();
    let parsed = parse_lambda(&best).unwrap_or_default();
    require!(
        best.starts_with('(') && parsed.len() == 2 && format_lambda(&parsed) == best,
        "best lambda {best:?} is not a per-group tuple"
    );
    require!(
        format_lambda(&[1.0 / 3.0, 81.0]) == "(1/3,81)",
        "tuple formatting"
    );
    Ok(format!("summary {cell}, best lambda {best}"))
}

fn main() {
    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().to_path_buf();
    let criteria: Vec<Criterion> = vec![
        ("gradient correctness", Box::new(gradients)),
        ("convolution oracle", Box::new(convolution)),
        ("reduction identities", Box::new(reductions)),
        ("norm invariant", Box::new(norm_invariant)),
        ("synthetic learnability", Box::new(learnability)),
        ("group-regularization effect", Box::new(group_regularization)),
        ("AUC oracle", Box::new(auc_oracle)),
        (
            "determinism",
            Box::new({
                let p = path.clone();
                move || determinism(&p)
            }),
        ),
        (
            "loader round-trip",
            Box::new({
                let p = path.clone();
                move || loaders(&p)
            }),
        ),
        (
            "protocol shape",
            Box::new({
                let p = path.clone();
                move || protocol_shape(&p)
            }),
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("[PASS] {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
