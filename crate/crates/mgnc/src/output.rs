//! Result files: training history, per-trial results, summaries and
//! best-λ tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mgnc_core::experiment::{GridSearchOutcome, TrialResult, Variant};
use mgnc_core::metrics::{Metric, Summary};
use mgnc_core::train::History;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Writes through a temporary file in the same directory and renames it
/// into place, creating parent directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Integers print bare, exact reciprocals of integers as `1/n`, anything
/// else in the shortest form that parses back to the same value.
pub fn format_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        return format!("{}", x as i64);
    }
    let inv = (1.0 / x).round();
    if x > 0.0 && (2.0..1e15).contains(&inv) && 1.0 / inv == x {
        return format!("1/{}", inv as i64);
    }
    format!("{x}")
}

/// Parses a number written by [`format_number`].
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b) = (a.trim().parse::<f64>().ok()?, b.trim().parse::<f64>().ok()?);
            (b != 0.0).then(|| a / b)
        }
        None => s.parse().ok(),
    }
}

/// `9` for one value, `(1,1)` for a per-group tuple.
pub fn format_lambda(lambda: &[f64]) -> String {
    let parts: Vec<String> = lambda.iter().map(|&v| format_number(v)).collect();
    match parts.len() {
        1 => parts[0].clone(),
        _ => format!("({})", parts.join(",")),
    }
}

/// Accepts `9`, `1,9` or `(1,9)`.
pub fn parse_lambda(s: &str) -> Option<Vec<f64>> {
    let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
    let values: Option<Vec<f64>> = inner.split(',').map(parse_number).collect();
    values.filter(|v| !v.is_empty())
}

/// A comma-separated list of numbers, `1/3` style fractions allowed.
pub fn parse_list(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(parse_number).collect()
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>, header_only: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(true)
        .from_writer(Vec::new());
    let mut empty = true;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
        empty = false;
    }
    if empty {
        w.write_record(header_only).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

#[derive(Serialize)]
struct HistoryRow {
    epoch: usize,
    train_loss: f64,
    dev_metric: Option<f64>,
}

pub fn history_csv(history: &History) -> Result<Vec<u8>> {
    csv_bytes(
        history.epochs.iter().map(|r| HistoryRow {
            epoch: r.epoch,
            train_loss: r.train_loss,
            dev_metric: r.dev_metric,
        }),
        &["epoch", "train_loss", "dev_metric"],
    )
}

/// One line of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub variant: String,
    pub groups: String,
    pub lambda: String,
    pub seed: u64,
    pub fold: Option<usize>,
    pub metric: String,
    pub value: f64,
}

impl From<&TrialResult> for ResultRow {
    fn from(t: &TrialResult) -> Self {
        Self {
            variant: t.variant.name().into(),
            groups: t.groups.clone(),
            lambda: format_lambda(&t.lambda),
            seed: t.seed,
            fold: t.fold,
            metric: t.metric.name().into(),
            value: t.value,
        }
    }
}

const RESULT_HEADER: [&str; 7] = ["variant", "groups", "lambda", "seed", "fold", "metric", "value"];

pub fn results_csv<'a>(trials: impl IntoIterator<Item = &'a TrialResult>) -> Result<Vec<u8>> {
    csv_bytes(trials.into_iter().map(ResultRow::from), &RESULT_HEADER)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Config(format!("cannot read {}: {e}", path.display())),
        _ => Error::format(path, "header", e.to_string()),
    })?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::format(path, format!("line {}", i + 2), e.to_string())))
        .collect()
}

/// Method label used in summary tables, e.g. `MGNC-CNN(w2v+glv)`.
pub fn method_name(variant: &str, groups: &str) -> String {
    let name = match Variant::parse(variant) {
        Some(v) => v.display_name(),
        None => variant,
    };
    format!("{name}({groups})")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub method: String,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// `mean (min,max)` in percent.
    pub result: String,
}

impl SummaryRow {
    pub fn new(dataset: &str, method: String, metric: Metric, summary: &Summary) -> Self {
        Self {
            dataset: dataset.into(),
            method,
            metric: metric.name().into(),
            n: summary.n,
            mean: summary.mean,
            min: summary.min,
            max: summary.max,
            result: summary.cell(),
        }
    }
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    csv_bytes(
        rows,
        &["dataset", "method", "metric", "n", "mean", "min", "max", "result"],
    )
}

/// Groups result rows by method and metric and summarises each group.
pub fn summarise(dataset: &str, rows: &[ResultRow]) -> Result<Vec<SummaryRow>> {
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.variant.clone(), r.groups.clone(), r.metric.clone()))
            .or_default()
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((variant, groups, metric), values)| {
            let summary = Summary::from_values(&values)?;
            let metric = Metric::parse(&metric)
                .ok_or_else(|| Error::Config(format!("unknown metric {metric:?} in results")))?;
            Ok(SummaryRow::new(
                dataset,
                method_name(&variant, &groups),
                metric,
                &summary,
            ))
        })
        .collect()
}

/// Rows are methods, columns datasets, cells `mean (min,max)`.
pub fn table(rows: &[SummaryRow]) -> String {
    let mut datasets: Vec<&str> = rows.iter().map(|r| r.dataset.as_str()).collect();
    datasets.dedup();
    datasets.sort_unstable();
    datasets.dedup();
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    let cell = |m: &str, d: &str| {
        rows.iter()
            .find(|r| r.method == m && r.dataset == d)
            .map_or("-".to_string(), |r| r.result.clone())
    };
    let mut grid: Vec<Vec<String>> = vec![std::iter::once("Method".to_string())
        .chain(datasets.iter().map(|d| d.to_string()))
        .collect()];
    for m in &methods {
        grid.push(
            std::iter::once(m.to_string())
                .chain(datasets.iter().map(|d| cell(m, d)))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &grid {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s:<w$}"))
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Mean dev score of every grid point.
#[derive(Serialize)]
struct GridRow {
    fold: Option<usize>,
    lambda: String,
    score: Option<f64>,
    trials: usize,
    failed: usize,
}

pub fn grid_csv<'a>(
    searches: impl IntoIterator<Item = (Option<usize>, &'a GridSearchOutcome)>,
) -> Result<Vec<u8>> {
    let rows: Vec<GridRow> = searches
        .into_iter()
        .flat_map(|(fold, s)| {
            s.points.iter().map(move |p| GridRow {
                fold,
                lambda: format_lambda(&p.lambda),
                score: p.score,
                trials: p.trials.len(),
                failed: p.failures.len(),
            })
        })
        .collect();
    csv_bytes(rows, &["fold", "lambda", "score", "trials", "failed"])
}

/// Best λ per method and fold, laid out like a best-λ table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestLambdaTable {
    pub metric: String,
    pub grid: Vec<String>,
    pub rows: Vec<BestLambdaRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestLambdaRow {
    pub method: String,
    pub fold: Option<usize>,
    pub best_lambda: String,
    pub dev_score: f64,
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}
