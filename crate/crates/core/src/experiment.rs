//! Trials, repeated runs, λ grid search and nested cross-validation.
//!
//! All orchestration goes through an [`Executor`], which maps a function
//! over independent jobs and returns results in job order. [`Sequential`]
//! runs them one by one; the `mgnc` crate provides a thread-pool executor.
//! Since every job is a pure function of its inputs and seed, the choice of
//! executor never changes a result.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::data::{filter_short, select, IndexedExample, SplitPlan};
use crate::embedding::{make_ccnn_group, EmbeddingGroup};
use crate::error::{ensure, usage};
use crate::metrics::{Metric, Summary};
use crate::model::ModelParams;
use crate::regularization::{ConstraintTarget, Lambda, RegularizationSpec};
use crate::train::{evaluate, train, History, TrainConfig};
use crate::{Error, Real, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// One embedding group.
    Cnn,
    /// One group formed by concatenating every group's vectors per word.
    Ccnn,
    /// Independent filters per group, one bound over the whole classifier row.
    Mg,
    /// Independent filters per group, one bound per group segment.
    Mgnc,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Cnn, Variant::Ccnn, Variant::Mg, Variant::Mgnc];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cnn => "cnn",
            Variant::Ccnn => "ccnn",
            Variant::Mg => "mg",
            Variant::Mgnc => "mgnc",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    /// Label used in result tables, e.g. `MGNC-CNN`.
    pub fn display_name(self) -> &'static str {
        match self {
            Variant::Cnn => "CNN",
            Variant::Ccnn => "C-CNN",
            Variant::Mg => "MG-CNN",
            Variant::Mgnc => "MGNC-CNN",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Runs independent jobs, returning results in job order.
pub trait Executor: Sync {
    fn map<T, R, G>(&self, jobs: &[T], f: G) -> Vec<R>
    where
        T: Sync,
        R: Send,
        G: Fn(&T) -> R + Sync;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, R, G>(&self, jobs: &[T], f: G) -> Vec<R>
    where
        T: Sync,
        R: Send,
        G: Fn(&T) -> R + Sync,
    {
        jobs.iter().map(f).collect()
    }
}

/// One model variant with its inputs and fixed hyper-parameters; only λ
/// and the seed change between trials.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment<F> {
    variant: Variant,
    groups: Vec<EmbeddingGroup<F>>,
    pub train: TrainConfig,
    pub target: ConstraintTarget,
    pub dropout: f64,
    pub classes: usize,
    /// Training portions drop sentences shorter than this.
    pub min_train_len: Option<usize>,
}

impl<F: Real> Experiment<F> {
    /// `groups` are the loaded embedding sets; C-CNN concatenates them here.
    pub fn new(
        variant: Variant,
        groups: Vec<EmbeddingGroup<F>>,
        train: TrainConfig,
        classes: usize,
    ) -> Result<Self> {
        train.validate()?;
        ensure!(!groups.is_empty(), "at least one embedding group is required");
        let groups = match variant {
            Variant::Cnn => {
                ensure!(
                    groups.len() == 1,
                    "cnn uses exactly one embedding group, got {}",
                    groups.len()
                );
                groups
            }
            Variant::Ccnn => alloc::vec![make_ccnn_group(&groups)?],
            Variant::Mg | Variant::Mgnc => groups,
        };
        Ok(Self {
            variant,
            groups,
            train,
            target: ConstraintTarget::ClassifierWeights,
            dropout: crate::regularization::DEFAULT_DROPOUT,
            classes,
            min_train_len: None,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// Groups the network is built on (one concatenated group for C-CNN).
    pub fn groups(&self) -> &[EmbeddingGroup<F>] {
        &self.groups
    }

    /// `+`-joined group names, e.g. `w2v+glv`.
    pub fn group_names(&self) -> String {
        self.groups
            .iter()
            .map(EmbeddingGroup::name)
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Number of λ values a trial takes: one per group for MGNC, else one.
    pub fn lambda_arity(&self) -> usize {
        match self.variant {
            Variant::Mgnc => self.groups.len(),
            _ => 1,
        }
    }

    pub fn spec(&self, lambda: &[f64]) -> Result<RegularizationSpec> {
        ensure!(
            lambda.len() == self.lambda_arity(),
            "{} expects {} lambda value(s), got {}",
            self.variant,
            self.lambda_arity(),
            lambda.len()
        );
        let lambda = match self.variant {
            Variant::Mgnc => Lambda::PerGroup(lambda.to_vec()),
            _ => Lambda::Single(lambda[0]),
        };
        let spec = RegularizationSpec {
            lambda,
            target: self.target,
            dropout: self.dropout,
        };
        spec.validate(self.groups.len())?;
        Ok(spec)
    }

    /// Initialises a model from `seed` and trains it. The same generator
    /// drives initialisation, shuffling and dropout.
    pub fn fit(
        &self,
        train_set: &[IndexedExample],
        dev: Option<&[IndexedExample]>,
        lambda: &[f64],
        seed: u64,
    ) -> Result<(ModelParams<F>, History)> {
        let spec = self.spec(lambda)?;
        let filtered;
        let train_set = match self.min_train_len {
            Some(min) => {
                filtered = filter_short(train_set, min)?;
                &filtered[..]
            }
            None => train_set,
        };
        let mut config = self.train.clone();
        config.seed = seed;
        let mut rng = Rng::new(seed);
        let params = ModelParams::init(
            self.groups.clone(),
            config.model_config(self.classes, self.dropout),
            &mut rng,
        )?;
        train(params, train_set, dev, &config, &spec, &mut rng)
    }

    /// Fits and scores on `eval`.
    pub fn run_trial(
        &self,
        train_set: &[IndexedExample],
        dev: Option<&[IndexedExample]>,
        eval: &[IndexedExample],
        lambda: &[f64],
        seed: u64,
    ) -> Result<f64> {
        let (params, _) = self.fit(train_set, dev, lambda, seed)?;
        evaluate(&params, eval, self.train.metric)
    }

    fn result(&self, lambda: &[f64], seed: u64, fold: Option<usize>, value: f64) -> TrialResult {
        TrialResult {
            variant: self.variant,
            groups: self.group_names(),
            lambda: lambda.to_vec(),
            seed,
            fold,
            metric: self.train.metric,
            value,
        }
    }
}

/// One scored training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub variant: Variant,
    pub groups: String,
    pub lambda: Vec<f64>,
    pub seed: u64,
    pub fold: Option<usize>,
    pub metric: Metric,
    pub value: f64,
}

/// A trial that raised an error instead of producing a score.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub lambda: Vec<f64>,
    pub seed: u64,
    pub fold: Option<usize>,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatOutcome {
    pub summary: Summary,
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

/// Train/dev/eval sets for a batch of trials.
#[derive(Debug, Clone, Copy)]
pub struct TrialData<'a> {
    pub train: &'a [IndexedExample],
    /// Used for best-epoch selection when present.
    pub dev: Option<&'a [IndexedExample]>,
    pub eval: &'a [IndexedExample],
}

/// Runs `n` trials with seeds `base_seed..base_seed + n` and summarises the
/// eval metric. Failed trials are recorded and skipped.
pub fn repeat_runs<F: Real, E: Executor>(
    experiment: &Experiment<F>,
    data: TrialData<'_>,
    lambda: &[f64],
    n: usize,
    base_seed: u64,
    executor: &E,
) -> Result<RepeatOutcome> {
    ensure!(n >= 1, "at least one repetition is required");
    let seeds: Vec<u64> = (0..n as u64).map(|i| base_seed + i).collect();
    let outcomes = executor.map(&seeds, |&seed| {
        experiment.run_trial(data.train, data.dev, data.eval, lambda, seed)
    });
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (seed, outcome) in seeds.into_iter().zip(outcomes) {
        match outcome {
            Ok(value) => trials.push(experiment.result(lambda, seed, None, value)),
            Err(error) => failures.push(TrialFailure {
                lambda: lambda.to_vec(),
                seed,
                fold: None,
                error,
            }),
        }
    }
    let values: Vec<f64> = trials.iter().map(|t| t.value).collect();
    let summary = Summary::from_values(&values).map_err(|_| {
        usage!(
            "all {n} repetitions failed: {:?}",
            failures.first().map(|f| &f.error)
        )
    })?;
    Ok(RepeatOutcome {
        summary,
        trials,
        failures,
    })
}

/// Every λ tuple of the given arity over `grid`, in lexicographic order of
/// grid positions.
pub fn grid_points(grid: &[f64], arity: usize) -> Vec<Vec<f64>> {
    let mut points: Vec<Vec<f64>> = alloc::vec![Vec::new()];
    for _ in 0..arity {
        points = points
            .into_iter()
            .flat_map(|p| {
                grid.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Orders candidates best first: higher score, then smaller λ tuple
/// (compared value by value). Unscored candidates come last.
pub fn compare_candidates(a: (&[f64], Option<f64>), b: (&[f64], Option<f64>)) -> Ordering {
    let score = |s: Option<f64>| s.filter(|v| !v.is_nan());
    match (score(a.1), score(b.1)) {
        (Some(x), Some(y)) if x != y => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        _ => {
            a.0.iter()
                .zip(b.0)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub lambda: Vec<f64>,
    /// Mean dev metric over the successful repetitions.
    pub score: Option<f64>,
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchOutcome {
    pub best: Vec<f64>,
    pub best_score: f64,
    pub points: Vec<GridPoint>,
}

impl GridSearchOutcome {
    pub fn trials(&self) -> impl Iterator<Item = &TrialResult> {
        self.points.iter().flat_map(|p| &p.trials)
    }

    /// Number of trainings that were run.
    pub fn evaluations(&self) -> usize {
        self.points
            .iter()
            .map(|p| p.trials.len() + p.failures.len())
            .sum()
    }
}

/// Evaluates every λ tuple over `grid` on `dev` (`repetitions` seeds each,
/// starting at `base_seed`) and picks the best mean dev metric, breaking
/// ties toward smaller λ.
#[allow(clippy::too_many_arguments)]
pub fn grid_search<F: Real, E: Executor>(
    experiment: &Experiment<F>,
    train_set: &[IndexedExample],
    dev: &[IndexedExample],
    grid: &[f64],
    repetitions: usize,
    base_seed: u64,
    fold: Option<usize>,
    executor: &E,
) -> Result<GridSearchOutcome> {
    ensure!(!grid.is_empty(), "lambda grid is empty");
    ensure!(!dev.is_empty(), "grid search needs a non-empty dev split");
    ensure!(
        repetitions >= 1,
        "at least one repetition per grid point is required"
    );
    let points = grid_points(grid, experiment.lambda_arity());
    let jobs: Vec<(usize, u64)> = (0..points.len())
        .flat_map(|p| (0..repetitions as u64).map(move |r| (p, base_seed + r)))
        .collect();
    let outcomes = executor.map(&jobs, |&(p, seed)| {
        experiment.run_trial(train_set, Some(dev), dev, &points[p], seed)
    });
    let mut scored: Vec<GridPoint> = points
        .into_iter()
        .map(|lambda| GridPoint {
            lambda,
            score: None,
            trials: Vec::new(),
            failures: Vec::new(),
        })
        .collect();
    for (&(p, seed), outcome) in jobs.iter().zip(outcomes) {
        let point = &mut scored[p];
        match outcome {
            Ok(value) => {
                let trial = experiment.result(&point.lambda, seed, fold, value);
                point.trials.push(trial);
            }
            Err(error) => point.failures.push(TrialFailure {
                lambda: point.lambda.clone(),
                seed,
                fold,
                error,
            }),
        }
    }
    for point in &mut scored {
        if !point.trials.is_empty() {
            let total: f64 = point.trials.iter().map(|t| t.value).sum();
            point.score = Some(total / point.trials.len() as f64);
        }
    }
    let best = scored
        .iter()
        .min_by(|a, b| compare_candidates((&a.lambda, a.score), (&b.lambda, b.score)))
        .filter(|p| p.score.is_some())
        .ok_or_else(|| usage!("every grid point failed"))?;
    Ok(GridSearchOutcome {
        best: best.lambda.clone(),
        best_score: best.score.unwrap_or(f64::NAN),
        points: scored,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    pub best_lambda: Vec<f64>,
    pub dev_score: f64,
    pub test: TrialResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidationOutcome {
    pub summary: Summary,
    pub folds: Vec<FoldOutcome>,
    /// Every grid-search trial, tagged with its fold.
    pub grid_trials: Vec<TrialResult>,
}

/// Nested cross-validation: per fold, grid search on the nested dev set,
/// retrain on the fold's whole training portion with the chosen λ and score
/// the fold's test set.
#[allow(clippy::too_many_arguments)]
pub fn cross_validate<F: Real, E: Executor>(
    experiment: &Experiment<F>,
    examples: &[IndexedExample],
    plan: &SplitPlan,
    grid: &[f64],
    repetitions: usize,
    base_seed: u64,
    executor: &E,
) -> Result<CrossValidationOutcome> {
    ensure!(!plan.folds.is_empty(), "split plan has no folds");
    let mut folds = Vec::with_capacity(plan.folds.len());
    let mut grid_trials = Vec::new();
    for (f, fold) in plan.folds.iter().enumerate() {
        let train_part = select(examples, &fold.train);
        let dev_part = select(examples, &fold.dev);
        let test_part = select(examples, &fold.test);
        let search = grid_search(
            experiment,
            &train_part,
            &dev_part,
            grid,
            repetitions,
            base_seed,
            Some(f),
            executor,
        )
        .map_err(|e| annotate(e, f))?;
        grid_trials.extend(search.trials().cloned());
        let full_train = select(examples, &fold.full_train());
        let seed = base_seed + f as u64;
        let value = experiment
            .run_trial(&full_train, None, &test_part, &search.best, seed)
            .map_err(|e| annotate(e, f))?;
        folds.push(FoldOutcome {
            fold: f,
            best_lambda: search.best.clone(),
            dev_score: search.best_score,
            test: experiment.result(&search.best, seed, Some(f), value),
        });
    }
    let values: Vec<f64> = folds.iter().map(|f| f.test.value).collect();
    Ok(CrossValidationOutcome {
        summary: Summary::from_values(&values)?,
        folds,
        grid_trials,
    })
}

fn annotate(error: Error, fold: usize) -> Error {
    match error {
        Error::Usage(m) => Error::Usage(format!("fold {fold}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("fold {fold}: {m}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn grid_cardinality() {
        let grid = crate::regularization::DEFAULT_LAMBDA_GRID;
        assert_eq!(grid_points(&grid, 1).len(), 6);
        assert_eq!(grid_points(&grid, 2).len(), 36);
        assert_eq!(grid_points(&grid, 3).len(), 216);
        assert_eq!(
            grid_points(&[1.0, 2.0], 2),
            [[1.0, 1.0], [1.0, 2.0], [2.0, 1.0], [2.0, 2.0]]
        );
    }

    #[test]
    fn ties_prefer_smaller_lambda() {
        let mut candidates = [
            (vec![9.0, 1.0], Some(0.8)),
            (vec![3.0, 81.0], Some(0.8)),
            (vec![1.0, 1.0], Some(0.7)),
            (vec![0.5, 0.5], None),
        ];
        candidates.sort_by(|a, b| compare_candidates((&a.0, a.1), (&b.0, b.1)));
        assert_eq!(candidates[0].0, [3.0, 81.0]);
        assert_eq!(candidates[1].0, [9.0, 1.0]);
        assert_eq!(candidates[3].0, [0.5, 0.5]);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()), Some(v));
        }
        assert_eq!(Variant::parse("mvcnn"), None);
    }
}
