use std::path::{Path, PathBuf};

use mgnc_core::data::{Example, IndexedExample, LabelSet, SplitStrategy};
use mgnc_core::experiment::{cross_validate, grid_search, repeat_runs, TrialData, TrialFailure, TrialResult};
use mgnc_core::gradcheck::{gradient_check, GradCheckConfig};
use mgnc_core::metrics::Summary;
use mgnc_core::model::{Activation, TensorId};
use mgnc_core::regularization::ConstraintTarget;
use mgnc_core::synthetic::{make_synthetic, SyntheticSizes, SyntheticTask};
use mgnc_core::train::evaluate as score;
use mgnc_core::{Real, Rng};
use serde::Serialize;

use crate::checkpoint::{read_checkpoint, write_checkpoint, AnyCheckpoint, Checkpoint};
use crate::cli::{EvaluateArgs, ExperimentArgs, GradcheckArgs, ReportArgs, SynthArgs};
use crate::config::{
    resolve, DataConfig, EmbeddingConfig, ExperimentConfig, Precision, Requirements, Resolved,
};
use crate::corpus::{load_tsv, write_tsv};
use crate::embeddings_io::{write_text_vectors, write_word2vec_binary, EmbeddingFormat};
use crate::error::{Error, Result};
use crate::output::{
    format_lambda, format_number, grid_csv, history_csv, json_bytes, method_name, read_results, results_csv,
    summarise, summary_csv, table, write_atomic, BestLambdaRow, BestLambdaTable, SummaryRow,
};
use crate::parallel::Runner;
use crate::pipeline::{experiment, load_splits, prepare, Prepared, Splits};

fn warn(message: &str) {
    eprintln!("warning: {message}");
}

fn note(message: &str) {
    eprintln!("note: {message}");
}

fn resolved(args: &ExperimentArgs, command: &str) -> Result<Resolved> {
    let r = resolve(args.merged()?, command, Requirements { data: true })?;
    r.warnings.iter().for_each(|w| warn(w));
    Ok(r)
}

fn snapshot<T: Serialize>(out: &Path, value: &T) -> Result<()> {
    write_atomic(&out.join("config.json"), &json_bytes(value)?)
}

fn experiment_snapshot(r: &Resolved) -> Result<()> {
    let mut raw = r.raw.clone();
    raw.out = Some(r.out.clone());
    snapshot(&r.out, &raw)
}

fn dataset_name(r: &Resolved) -> String {
    r.raw
        .data
        .train
        .as_deref()
        .and_then(Path::file_stem)
        .map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

fn non_empty(v: &[IndexedExample]) -> Option<&[IndexedExample]> {
    (!v.is_empty()).then_some(v)
}

fn report_failures(failures: &[TrialFailure]) {
    for f in failures {
        warn(&format!(
            "trial with lambda {} seed {} failed and was skipped: {}",
            format_lambda(&f.lambda),
            f.seed,
            f.error
        ));
    }
}

fn prepared<F: Real>(r: &Resolved, splits: Splits) -> Result<Prepared<F>> {
    let p = prepare::<F>(r, splits)?;
    p.notes.iter().for_each(|n| note(n));
    Ok(p)
}

fn write_summary(r: &Resolved, trials: &[TrialResult]) -> Result<Summary> {
    let values: Vec<f64> = trials.iter().map(|t| t.value).collect();
    let summary = Summary::from_values(&values)?;
    let method = method_name(r.variant.name(), &trials[0].groups);
    let row = SummaryRow::new(&dataset_name(r), method, r.train.metric, &summary);
    write_atomic(&r.out.join("results.csv"), &results_csv(trials)?)?;
    write_atomic(&r.out.join("summary.csv"), &summary_csv(&[row])?)?;
    Ok(summary)
}

pub fn train(args: &ExperimentArgs) -> Result<()> {
    let r = resolved(args, "train")?;
    match r.precision {
        Precision::F32 => train_as::<f32>(&r),
        Precision::F64 => train_as::<f64>(&r),
    }
}

fn train_as<F: Real>(r: &Resolved) -> Result<()> {
    let p = prepared::<F>(r, Splits::Holdout)?;
    let e = experiment(r, &p)?;
    let runner = Runner::new(r.raw.parallel)?;
    let dev = non_empty(&p.dev);
    let (eval, split) = match (non_empty(&p.test), dev) {
        (Some(t), _) => (t, "test"),
        (None, Some(d)) => (d, "dev"),
        (None, None) => return Err(Error::Config("no test or dev split to score on".into())),
    };
    let seed = r.raw.seed;
    let metric = r.train.metric;
    let (params, history) = e.fit(&p.train, dev, &r.lambda, seed)?;
    let mut trials = vec![TrialResult {
        variant: r.variant,
        groups: e.group_names(),
        lambda: r.lambda.clone(),
        seed,
        fold: None,
        metric,
        value: score(&params, eval, metric)?,
    }];
    if r.raw.repetitions > 1 {
        let data = TrialData {
            train: &p.train,
            dev,
            eval,
        };
        let more = repeat_runs(&e, data, &r.lambda, r.raw.repetitions - 1, seed + 1, &runner)?;
        report_failures(&more.failures);
        trials.extend(more.trials);
    }
    let checkpoint = Checkpoint {
        params,
        vocab: p.vocab.clone(),
        labels: p.labels.clone(),
        tokenize: r.tokenize,
    };
    write_checkpoint(&r.out.join("checkpoint.bin"), &checkpoint)?;
    write_atomic(&r.out.join("history.csv"), &history_csv(&history)?)?;
    let summary = write_summary(r, &trials)?;
    experiment_snapshot(r)?;
    if let Some(best) = history.best().and_then(|b| b.dev_metric.map(|m| (b.epoch, m))) {
        println!(
            "best epoch {} with dev {metric} {}",
            best.0,
            format_number(best.1)
        );
    }
    println!(
        "{} lambda {}: {split} {metric} over {} run(s): {}",
        method_name(r.variant.name(), &e.group_names()),
        format_lambda(&r.lambda),
        summary.n,
        summary.cell()
    );
    Ok(())
}

pub fn gridsearch(args: &ExperimentArgs) -> Result<()> {
    let r = resolved(args, "gridsearch")?;
    match r.precision {
        Precision::F32 => gridsearch_as::<f32>(&r),
        Precision::F64 => gridsearch_as::<f64>(&r),
    }
}

fn best_table(r: &Resolved, rows: Vec<BestLambdaRow>) -> BestLambdaTable {
    BestLambdaTable {
        metric: r.train.metric.name().into(),
        grid: r.raw.lambda_grid.iter().map(|&v| format_number(v)).collect(),
        rows,
    }
}

fn gridsearch_as<F: Real>(r: &Resolved) -> Result<()> {
    let p = prepared::<F>(r, Splits::Holdout)?;
    let e = experiment(r, &p)?;
    let runner = Runner::new(r.raw.parallel)?;
    let dev =
        non_empty(&p.dev).ok_or_else(|| Error::Config("grid search needs a non-empty dev split".into()))?;
    let grid = &r.raw.lambda_grid;
    let seed = r.raw.seed;
    let search = grid_search(&e, &p.train, dev, grid, r.raw.repetitions, seed, None, &runner)?;
    for point in &search.points {
        report_failures(&point.failures);
    }
    let method = method_name(r.variant.name(), &e.group_names());
    write_atomic(&r.out.join("grid_trials.csv"), &results_csv(search.trials())?)?;
    write_atomic(&r.out.join("grid.csv"), &grid_csv([(None, &search)])?)?;
    let table = best_table(
        r,
        vec![BestLambdaRow {
            method: method.clone(),
            fold: None,
            best_lambda: format_lambda(&search.best),
            dev_score: search.best_score,
        }],
    );
    write_atomic(&r.out.join("best_lambda.json"), &json_bytes(&table)?)?;
    println!(
        "{method}: best lambda {} with mean dev {} {} ({} grid points, {} trainings)",
        format_lambda(&search.best),
        r.train.metric,
        format_number(search.best_score),
        search.points.len(),
        search.evaluations()
    );
    if let Some(test) = non_empty(&p.test) {
        let data = TrialData {
            train: &p.train,
            dev: Some(dev),
            eval: test,
        };
        let outcome = repeat_runs(&e, data, &search.best, r.raw.repetitions, seed, &runner)?;
        report_failures(&outcome.failures);
        let summary = write_summary(r, &outcome.trials)?;
        println!(
            "{method}: test {} over {} run(s): {}",
            r.train.metric,
            summary.n,
            summary.cell()
        );
    }
    experiment_snapshot(r)
}

pub fn cv(args: &ExperimentArgs) -> Result<()> {
    let r = resolved(args, "cv")?;
    match r.precision {
        Precision::F32 => cv_as::<f32>(&r),
        Precision::F64 => cv_as::<f64>(&r),
    }
}

fn cv_as<F: Real>(r: &Resolved) -> Result<()> {
    let p = prepared::<F>(r, Splits::Whole)?;
    let e = experiment(r, &p)?;
    let runner = Runner::new(r.raw.parallel)?;
    let plan = mgnc_core::data::make_splits(p.train.len(), r.kfold(), r.raw.seed)?;
    let outcome = cross_validate(
        &e,
        &p.train,
        &plan,
        &r.raw.lambda_grid,
        r.raw.repetitions,
        r.raw.seed,
        &runner,
    )?;
    let method = method_name(r.variant.name(), &e.group_names());
    write_atomic(
        &r.out.join("grid_trials.csv"),
        &results_csv(&outcome.grid_trials)?,
    )?;
    let tests: Vec<TrialResult> = outcome.folds.iter().map(|f| f.test.clone()).collect();
    let summary = write_summary(r, &tests)?;
    let rows = outcome
        .folds
        .iter()
        .map(|f| BestLambdaRow {
            method: method.clone(),
            fold: Some(f.fold),
            best_lambda: format_lambda(&f.best_lambda),
            dev_score: f.dev_score,
        })
        .collect();
    write_atomic(
        &r.out.join("best_lambda.json"),
        &json_bytes(&best_table(r, rows))?,
    )?;
    experiment_snapshot(r)?;
    let k = match r.kfold() {
        SplitStrategy::KFold { k, .. } => k,
        SplitStrategy::Fixed { .. } => 1,
    };
    println!("{method}: {k}-fold {} {}", r.train.metric, summary.cell());
    Ok(())
}

#[derive(Serialize)]
struct EvaluateSnapshot<'a> {
    checkpoint: &'a Path,
    data: Option<&'a Path>,
    split: &'a str,
    config: ExperimentConfig,
}

#[derive(Serialize)]
struct Metrics<'a> {
    metric: &'a str,
    value: f64,
    examples: usize,
    unknown_tokens: usize,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut r = resolve(
        args.experiment.merged()?,
        "evaluate",
        Requirements { data: false },
    )?;
    if !args.checkpoint.is_file() {
        return Err(Error::Config(format!(
            "checkpoint: file not found: {}",
            args.checkpoint.display()
        )));
    }
    match read_checkpoint(&args.checkpoint)? {
        AnyCheckpoint::F32(c) => {
            r.tokenize = c.tokenize;
            evaluate_as(&r, args, c)
        }
        AnyCheckpoint::F64(c) => {
            r.tokenize = c.tokenize;
            evaluate_as(&r, args, c)
        }
    }
}

fn evaluate_as<F: Real>(r: &Resolved, args: &EvaluateArgs, ck: Checkpoint<F>) -> Result<()> {
    let x = &args.experiment;
    let shaped = ck.params.config();
    if x.heights.is_some() && r.train.heights != shaped.heights {
        return Err(Error::Config(format!(
            "checkpoint was trained with filter heights {:?} but --heights asks for {:?}",
            shaped.heights, r.train.heights
        )));
    }
    if x.maps.is_some() && r.train.maps != shaped.maps {
        return Err(Error::Config(format!(
            "checkpoint has {} feature maps per height but --maps asks for {}",
            shaped.maps, r.train.maps
        )));
    }
    let (examples, labels, source): (Vec<Example>, LabelSet, PathBuf) =
        match &args.data {
            Some(path) => {
                let mut labels = LabelSet::new();
                let corpus = load_tsv(path, &mut labels, ck.tokenize)?;
                (corpus.examples, labels, path.clone())
            }
            None => {
                let source =
                    r.raw.data.train.clone().ok_or_else(|| {
                        Error::Config("evaluate needs --data or a configured corpus".into())
                    })?;
                let raw = load_splits(r, Splits::Holdout)?;
                let examples = if args.split == "dev" { raw.dev } else { raw.test };
                (examples, raw.labels, source)
            }
        };
    if examples.is_empty() {
        return Err(Error::Config(format!("no {} examples to score", args.split)));
    }
    let mut unknown = 0;
    let mut indexed = Vec::with_capacity(examples.len());
    for e in &examples {
        let name = labels.name(e.label).unwrap_or_default();
        let label = ck.labels.get(name).ok_or_else(|| {
            Error::format(
                &source,
                "labels",
                format!("label {name:?} is unknown to the checkpoint"),
            )
        })?;
        let (ids, dropped) = ck.vocab.encode_known(&e.tokens);
        unknown += dropped;
        indexed.push(IndexedExample { ids, label });
    }
    if unknown > 0 {
        warn(&format!(
            "{unknown} tokens are not in the checkpoint vocabulary and were dropped"
        ));
    }
    let metric = r.train.metric;
    let value = score(&ck.params, &indexed, metric)?;
    let metrics = Metrics {
        metric: metric.name(),
        value,
        examples: indexed.len(),
        unknown_tokens: unknown,
    };
    write_atomic(&r.out.join("metrics.json"), &json_bytes(&metrics)?)?;
    snapshot(
        &r.out,
        &EvaluateSnapshot {
            checkpoint: &args.checkpoint,
            data: args.data.as_deref(),
            split: &args.split,
            config: r.raw.clone(),
        },
    )?;
    println!("{metric} on {} examples: {}", indexed.len(), format_number(value));
    Ok(())
}

fn tensor_label(id: TensorId) -> String {
    match id {
        TensorId::Embedding { group } => format!("embedding/{group}"),
        TensorId::FilterWeights { group, height } => format!("filters/{group}/{height}/weights"),
        TensorId::FilterBias { group, height } => format!("filters/{group}/{height}/biases"),
        TensorId::ClassifierWeights => "classifier/weights".into(),
        TensorId::ClassifierBias => "classifier/biases".into(),
    }
}

#[derive(Serialize)]
struct GradcheckSnapshot<'a> {
    mode: &'a str,
    precision: &'a str,
    activation: &'a str,
    seed: u64,
    tolerance: f64,
}

#[derive(Serialize)]
struct TensorLine {
    tensor: String,
    max_rel_error: f64,
    worst_index: usize,
    checked: usize,
}

#[derive(Serialize)]
struct GradcheckOutput {
    passed: bool,
    max_rel_error: f64,
    by_class: std::collections::BTreeMap<&'static str, f64>,
    pad_gradient: f64,
    constraint_active: bool,
    tensors: Vec<TensorLine>,
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    if args.precision != "64" {
        return Err(Error::Config(
            "gradcheck requires --precision 64; central differences are too coarse in 32-bit".into(),
        ));
    }
    let target = match args.mode.as_str() {
        "activations" => ConstraintTarget::Activations,
        _ => ConstraintTarget::ClassifierWeights,
    };
    let activation = Activation::parse(&args.activation).unwrap_or_default();
    let config = GradCheckConfig {
        target,
        activation,
        seed: args.seed,
        tolerance: args.tolerance,
        ..GradCheckConfig::default()
    };
    let report = gradient_check(&config)?;
    for (class, err) in report.by_class() {
        println!("{class:<20} max relative error {err:.3e}");
    }
    if target == ConstraintTarget::Activations {
        println!("activation constraint active: {}", report.constraint_active);
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs/gradcheck"));
    let output = GradcheckOutput {
        passed: report.passed(),
        max_rel_error: report.max_rel_error(),
        by_class: report.by_class(),
        pad_gradient: report.pad_gradient,
        constraint_active: report.constraint_active,
        tensors: report
            .tensors
            .iter()
            .map(|t| TensorLine {
                tensor: tensor_label(t.id),
                max_rel_error: t.max_rel_error,
                worst_index: t.worst_index,
                checked: t.checked,
            })
            .collect(),
    };
    write_atomic(&out.join("gradcheck.json"), &json_bytes(&output)?)?;
    snapshot(
        &out,
        &GradcheckSnapshot {
            mode: &args.mode,
            precision: &args.precision,
            activation: &args.activation,
            seed: args.seed,
            tolerance: args.tolerance,
        },
    )?;
    if !report.passed() {
        let mut lines: Vec<String> = report
            .failures()
            .iter()
            .map(|t| {
                format!(
                    "{} (element {}, relative error {:.3e})",
                    tensor_label(t.id),
                    t.worst_index,
                    t.max_rel_error
                )
            })
            .collect();
        if report.pad_gradient != 0.0 {
            lines.push(format!("padding row gradient {:.3e}", report.pad_gradient));
        }
        return Err(Error::Check(format!(
            "gradient check failed above tolerance {:e}: {}",
            args.tolerance,
            lines.join("; ")
        )));
    }
    println!(
        "gradient check passed (max relative error {:.3e})",
        report.max_rel_error()
    );
    Ok(())
}

#[derive(Serialize)]
struct SynthSnapshot<'a> {
    task: &'a str,
    train_size: usize,
    dev_size: usize,
    test_size: usize,
    dims: &'a [usize],
    seed: u64,
    format: &'a str,
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let task = match args.task.as_str() {
        "group_informative" => SyntheticTask::GroupInformative,
        _ => SyntheticTask::Separable,
    };
    let sizes = SyntheticSizes {
        train: args.train_size,
        dev: args.dev_size,
        test: args.test_size,
        dims: args.dims.clone(),
    };
    let data = make_synthetic(task, &sizes, &mut Rng::new(args.seed))?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs/synth"));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    // experiment.json refers to its neighbours by file name.
    let split = |name: &str, examples: &[Example]| -> Result<PathBuf> {
        let file = PathBuf::from(format!("{name}.tsv"));
        write_tsv(&out.join(&file), examples, &data.labels)?;
        Ok(file)
    };
    let train = split("train", &data.train)?;
    let dev = split("dev", &data.dev)?;
    let test = split("test", &data.test)?;
    let format = EmbeddingFormat::parse(&args.format).unwrap_or(EmbeddingFormat::Text);
    let mut embeddings = Vec::new();
    for emb in &data.embeddings {
        let path = match format {
            EmbeddingFormat::Text => {
                let file = PathBuf::from(format!("{}.txt", emb.name));
                write_text_vectors(&out.join(&file), &emb.vectors, false)?;
                file
            }
            EmbeddingFormat::Word2vec => {
                let file = PathBuf::from(format!("{}.bin", emb.name));
                write_word2vec_binary(&out.join(&file), &emb.vectors, true)?;
                file
            }
        };
        embeddings.push(EmbeddingConfig {
            name: emb.name.clone(),
            path,
            format,
            trainable: emb.trainable,
        });
    }
    let experiment = ExperimentConfig {
        variant: if embeddings.len() > 1 { "mgnc" } else { "cnn" }.into(),
        data: DataConfig {
            train: Some(train),
            dev: Some(dev),
            test: Some(test),
            ..DataConfig::default()
        },
        embeddings,
        ..ExperimentConfig::default()
    };
    write_atomic(&out.join("experiment.json"), &json_bytes(&experiment)?)?;
    snapshot(
        &out,
        &SynthSnapshot {
            task: &args.task,
            train_size: args.train_size,
            dev_size: args.dev_size,
            test_size: args.test_size,
            dims: &args.dims,
            seed: args.seed,
            format: format.name(),
        },
    )?;
    println!(
        "wrote {} task ({}/{}/{} sentences, {} embedding groups) to {}",
        task.name(),
        data.train.len(),
        data.dev.len(),
        data.test.len(),
        data.embeddings.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ReportSnapshot<'a> {
    results: &'a [PathBuf],
}

fn dataset_of(path: &Path) -> String {
    path.parent()
        .and_then(Path::file_name)
        .or_else(|| path.file_stem())
        .map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned())
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for path in &args.results {
        if !path.is_file() {
            return Err(Error::Config(format!(
                "results: file not found: {}",
                path.display()
            )));
        }
        rows.extend(summarise(&dataset_of(path), &read_results(path)?)?);
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("runs/report"));
    let text = table(&rows);
    write_atomic(&out.join("summary.csv"), &summary_csv(&rows)?)?;
    write_atomic(&out.join("table.txt"), text.as_bytes())?;
    snapshot(
        &out,
        &ReportSnapshot {
            results: &args.results,
        },
    )?;
    print!("{text}");
    Ok(())
}
