//! Command-line arguments. Flags override values from `--config`.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::config::{parse_embedding_flag, ExperimentConfig};
use crate::error::{Error, Result};
use crate::output::{parse_lambda, parse_list};

#[derive(Debug, Parser)]
#[command(
    name = "mgnc",
    version,
    about = "Multi-group norm-constrained CNN sentence classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train with a fixed λ; writes a checkpoint, history and test results.
    Train(ExperimentArgs),
    /// Score a checkpoint on a labelled corpus.
    Evaluate(EvaluateArgs),
    /// Tune λ on the dev split, then score the best λ on the test split.
    Gridsearch(ExperimentArgs),
    /// Nested k-fold cross-validation with λ tuned inside each fold.
    Cv(ExperimentArgs),
    /// Compare analytic gradients with finite differences on a tiny model.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic corpus and matching embedding files.
    Synth(SynthArgs),
    /// Summarise results files as `mean (min,max)` tables.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = ["cnn", "ccnn", "mg", "mgnc"])]
    pub variant: Option<String>,
    /// Embedding group, repeatable. Replaces the groups from the config file.
    #[arg(long = "embedding", value_name = "NAME=PATH:FORMAT[:frozen]")]
    pub embeddings: Vec<String>,
    /// Training corpus (label<TAB>text per line).
    #[arg(long, value_name = "FILE")]
    pub train: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub dev: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub test: Option<PathBuf>,
    #[arg(long, value_parser = ["whitespace", "cleaned"])]
    pub tokenize: Option<String>,
    /// Drop training sentences shorter than this.
    #[arg(long, value_name = "N")]
    pub min_train_len: Option<usize>,
    /// Subsample the majority class of the training file.
    #[arg(long)]
    pub undersample: bool,
    #[arg(long, value_name = "K")]
    pub folds: Option<usize>,
    /// Filter heights, e.g. 3,4,5.
    #[arg(long, value_delimiter = ',')]
    pub heights: Option<Vec<usize>>,
    /// Feature maps per filter height.
    #[arg(long)]
    pub maps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stop after this many epochs without dev improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long, value_parser = ["relu", "tanh", "identity"])]
    pub activation: Option<String>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, value_parser = ["weights", "activations"])]
    pub constraint_target: Option<String>,
    /// λ for `train`: one value, or a tuple such as (1,9) for mgnc.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<String>,
    /// Comma-separated grid, e.g. 1/3,1,3,9,81,243.
    #[arg(long)]
    pub lambda_grid: Option<String>,
    /// Seeds per λ setting.
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trials run concurrently.
    #[arg(long, value_name = "N")]
    pub parallel: Option<usize>,
    #[arg(long, value_parser = ["32", "64"])]
    pub precision: Option<String>,
    #[arg(long, value_parser = ["accuracy", "auc"])]
    pub metric: Option<String>,
    /// Allow mgnc with a single embedding group.
    #[arg(long)]
    pub allow_single_group: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Corpus to score; defaults to the configured split.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = ["dev", "test"], default_value = "test")]
    pub split: String,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Where the max-norm bound applies.
    #[arg(long, value_parser = ["weights", "activations"], default_value = "weights")]
    pub mode: String,
    #[arg(long, value_parser = ["32", "64"], default_value = "64")]
    pub precision: String,
    #[arg(long, value_parser = ["relu", "tanh", "identity"], default_value = "relu")]
    pub activation: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = ["separable", "group_informative"], default_value = "separable")]
    pub task: String,
    #[arg(long, default_value_t = 500)]
    pub train_size: usize,
    #[arg(long, default_value_t = 100)]
    pub dev_size: usize,
    #[arg(long, default_value_t = 100)]
    pub test_size: usize,
    /// Embedding dimensions, one group per entry.
    #[arg(long, value_delimiter = ',', default_value = "20,20")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = ["text", "word2vec"], default_value = "text")]
    pub format: String,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results files; each file's parent directory names its dataset.
    #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
    pub results: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

impl ExperimentArgs {
    /// The configuration file (or defaults) with every given flag applied.
    pub fn merged(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let flag = |name: &str, value: &str| Error::Config(format!("--{name}: cannot parse {value:?}"));
        if let Some(v) = &self.variant {
            c.variant = v.clone();
        }
        if !self.embeddings.is_empty() {
            c.embeddings = self
                .embeddings
                .iter()
                .map(|s| parse_embedding_flag(s))
                .collect::<Result<_>>()?;
        }
        if let Some(v) = &self.train {
            c.data.train = Some(v.clone());
        }
        if let Some(v) = &self.dev {
            c.data.dev = Some(v.clone());
        }
        if let Some(v) = &self.test {
            c.data.test = Some(v.clone());
        }
        if let Some(v) = &self.tokenize {
            c.data.tokenize = v.clone();
        }
        if let Some(v) = self.min_train_len {
            c.data.min_train_len = Some(v);
        }
        if self.undersample {
            c.data.undersample = true;
        }
        if let Some(v) = self.folds {
            c.data.folds = v;
        }
        if let Some(v) = &self.heights {
            c.heights = v.clone();
        }
        if let Some(v) = self.maps {
            c.maps = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.patience {
            c.patience = Some(v);
        }
        if let Some(v) = &self.activation {
            c.activation = v.clone();
        }
        if let Some(v) = self.dropout {
            c.dropout = v;
        }
        if let Some(v) = &self.constraint_target {
            c.constraint_target = v.clone();
        }
        if let Some(v) = &self.lambda {
            c.lambda = Some(parse_lambda(v).ok_or_else(|| flag("lambda", v))?);
        }
        if let Some(v) = &self.lambda_grid {
            c.lambda_grid = if v.trim().is_empty() {
                Vec::new()
            } else {
                parse_list(v).ok_or_else(|| flag("lambda-grid", v))?
            };
        }
        if let Some(v) = self.repetitions {
            c.repetitions = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.parallel {
            c.parallel = v;
        }
        if let Some(v) = &self.precision {
            c.precision = v.clone();
        }
        if let Some(v) = &self.metric {
            c.metric = v.clone();
        }
        if self.allow_single_group {
            c.allow_single_group = true;
        }
        if let Some(v) = &self.out {
            c.out = Some(v.clone());
        }
        Ok(c)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Gridsearch(a) => commands::gridsearch(&a),
        Command::Cv(a) => commands::cv(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Report(a) => commands::report(&a),
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
