//! Experiment configuration: a JSON file whose values command-line flags
//! override, validated into the types the engine uses.
//!
//! Every field is optional in the file; missing fields take the defaults
//! below, which follow the standard protocol (heights 3/4/5, 100 maps,
//! dropout 0.5, batch 50, λ grid {1/3, 1, 3, 9, 81, 243}, 10 repetitions).

use std::path::{Path, PathBuf};

use mgnc_core::data::{SplitStrategy, TokenizeMode};
use mgnc_core::experiment::Variant;
use mgnc_core::metrics::Metric;
use mgnc_core::model::Activation;
use mgnc_core::optim::AdaDeltaConfig;
use mgnc_core::regularization::{ConstraintTarget, DEFAULT_DROPOUT, DEFAULT_LAMBDA_GRID};
use mgnc_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::checkpoint::parse_tokenize;
use crate::embeddings_io::EmbeddingFormat;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `cnn`, `ccnn`, `mg` or `mgnc`.
    pub variant: String,
    pub data: DataConfig,
    pub embeddings: Vec<EmbeddingConfig>,
    pub heights: Vec<usize>,
    pub maps: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: Option<usize>,
    /// `relu`, `tanh` or `identity`.
    pub activation: String,
    pub dropout: f64,
    /// `weights` or `activations`.
    pub constraint_target: String,
    /// λ for single trainings: one value, or one per group for `mgnc`.
    /// Defaults to 3 for every slot.
    pub lambda: Option<Vec<f64>>,
    pub lambda_grid: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
    /// `32` or `64`.
    pub precision: String,
    pub parallel: usize,
    /// `accuracy` or `auc`.
    pub metric: String,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    /// Lets `mgnc` run with a single embedding group.
    pub allow_single_group: bool,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// `whitespace` or `cleaned`.
    pub tokenize: String,
    /// Training portions drop sentences shorter than this.
    pub min_train_len: Option<usize>,
    /// Balance the classes of the training file by subsampling the majority.
    pub undersample: bool,
    /// Train/dev/test fractions used to carve missing splits from `train`.
    pub holdout: [f64; 3],
    pub folds: usize,
    pub fold_dev_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub name: String,
    pub path: PathBuf,
    pub format: EmbeddingFormat,
    #[serde(default = "yes")]
    pub trainable: bool,
}

fn yes() -> bool {
    true
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            variant: "mgnc".into(),
            data: DataConfig::default(),
            embeddings: Vec::new(),
            heights: train.heights,
            maps: train.maps,
            batch_size: train.batch_size,
            epochs: train.epochs,
            patience: train.patience,
            activation: train.activation.name().into(),
            dropout: DEFAULT_DROPOUT,
            constraint_target: "weights".into(),
            lambda: None,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            repetitions: 10,
            seed: 0,
            precision: "64".into(),
            parallel: 1,
            metric: train.metric.name().into(),
            adadelta_rho: train.adadelta.rho,
            adadelta_eps: train.adadelta.eps,
            allow_single_group: false,
            out: None,
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            dev: None,
            test: None,
            tokenize: "whitespace".into(),
            min_train_len: None,
            undersample: false,
            holdout: [0.8, 0.1, 0.1],
            folds: 10,
            fold_dev_fraction: 0.1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
        let mut config: Self = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, format!("line {}", e.line()), e.to_string()))?;
        // Relative paths inside a config file are relative to the file.
        let base = path.parent().unwrap_or(Path::new(""));
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let d = &mut config.data;
        d.train
            .iter_mut()
            .chain(d.dev.iter_mut())
            .chain(d.test.iter_mut())
            .for_each(anchor);
        config.embeddings.iter_mut().for_each(|e| anchor(&mut e.path));
        Ok(config)
    }
}

/// Parses `name=path:format[:frozen]`. The format may be omitted when the
/// extension is `.bin` (word2vec) or anything else (text).
pub fn parse_embedding_flag(spec: &str) -> Result<EmbeddingConfig> {
    let bad = |why: &str| Error::Config(format!("--embedding {spec:?}: {why}"));
    let (name, rest) = spec
        .split_once('=')
        .ok_or_else(|| bad("expected name=path:format[:frozen]"))?;
    if name.is_empty() {
        return Err(bad("empty group name"));
    }
    let (rest, trainable) = match rest.strip_suffix(":frozen") {
        Some(r) => (r, false),
        None => (rest, true),
    };
    let (path, format) = match rest.rsplit_once(':') {
        Some((p, f)) if EmbeddingFormat::parse(f).is_some() => (p, EmbeddingFormat::parse(f)),
        _ => (rest, None),
    };
    if path.is_empty() {
        return Err(bad("empty path"));
    }
    let path = PathBuf::from(path);
    let format = format.unwrap_or(match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => EmbeddingFormat::Word2vec,
        _ => EmbeddingFormat::Text,
    });
    Ok(EmbeddingConfig {
        name: name.into(),
        path,
        format,
        trainable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub raw: ExperimentConfig,
    pub variant: Variant,
    pub train: TrainConfig,
    pub target: ConstraintTarget,
    pub tokenize: TokenizeMode,
    pub precision: Precision,
    pub lambda: Vec<f64>,
    pub out: PathBuf,
    pub warnings: Vec<String>,
}

impl Resolved {
    pub fn kfold(&self) -> SplitStrategy {
        SplitStrategy::KFold {
            k: self.raw.data.folds,
            dev_fraction: self.raw.data.fold_dev_fraction,
        }
    }

    /// Number of groups the network is built on.
    pub fn model_groups(&self) -> usize {
        match self.variant {
            Variant::Ccnn => 1,
            _ => self.raw.embeddings.len(),
        }
    }

    pub fn lambda_arity(&self) -> usize {
        match self.variant {
            Variant::Mgnc => self.raw.embeddings.len(),
            _ => 1,
        }
    }
}

pub struct Requirements {
    /// The command trains models from a corpus.
    pub data: bool,
}

pub fn resolve(raw: ExperimentConfig, command: &str, needs: Requirements) -> Result<Resolved> {
    let cfg = |msg: String| Error::Config(msg);
    let mut warnings = Vec::new();
    let variant = Variant::parse(&raw.variant).ok_or_else(|| {
        cfg(format!(
            "variant: unknown value {:?} (expected cnn, ccnn, mg or mgnc)",
            raw.variant
        ))
    })?;
    let activation = Activation::parse(&raw.activation)
        .ok_or_else(|| cfg(format!("activation: unknown value {:?}", raw.activation)))?;
    let metric =
        Metric::parse(&raw.metric).ok_or_else(|| cfg(format!("metric: unknown value {:?}", raw.metric)))?;
    let target = match raw.constraint_target.as_str() {
        "weights" => ConstraintTarget::ClassifierWeights,
        "activations" => ConstraintTarget::Activations,
        other => return Err(cfg(format!("constraint_target: unknown value {other:?}"))),
    };
    let precision = match raw.precision.as_str() {
        "32" => Precision::F32,
        "64" => Precision::F64,
        other => return Err(cfg(format!("precision: expected 32 or 64, got {other:?}"))),
    };
    let tokenize = parse_tokenize(&raw.data.tokenize)
        .ok_or_else(|| cfg(format!("data.tokenize: unknown value {:?}", raw.data.tokenize)))?;
    if !(0.0..1.0).contains(&raw.dropout) {
        return Err(cfg(format!("dropout: must be in [0, 1), got {}", raw.dropout)));
    }
    if raw.repetitions == 0 {
        return Err(cfg("repetitions: must be positive".into()));
    }
    if raw.lambda_grid.is_empty() {
        return Err(cfg("lambda_grid: must not be empty".into()));
    }
    if let Some(bad) = raw.lambda_grid.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(cfg(format!("lambda_grid: values must be positive, got {bad}")));
    }
    if raw.heights.is_empty() || raw.heights.contains(&0) {
        return Err(cfg(
            "heights: must be a non-empty list of positive integers".into()
        ));
    }
    if raw.maps == 0 {
        return Err(cfg("maps: must be positive".into()));
    }
    let h = raw.data.holdout;
    if h.iter().any(|&f| f < 0.0) || ((h.iter().sum::<f64>()) - 1.0).abs() > 1e-9 || h[0] <= 0.0 {
        return Err(cfg(
            "data.holdout: fractions must be non-negative, sum to 1 and leave training data".into(),
        ));
    }
    let train = TrainConfig {
        heights: raw.heights.clone(),
        maps: raw.maps,
        batch_size: raw.batch_size,
        epochs: raw.epochs,
        activation,
        seed: raw.seed,
        patience: raw.patience,
        adadelta: AdaDeltaConfig {
            rho: raw.adadelta_rho,
            eps: raw.adadelta_eps,
        },
        metric,
    };
    train.validate().map_err(|e| cfg(e.to_string()))?;

    if needs.data {
        let Some(path) = &raw.data.train else {
            return Err(cfg("data.train: a training corpus is required (--train)".into()));
        };
        for (field, path) in [
            ("data.train", Some(path)),
            ("data.dev", raw.data.dev.as_ref()),
            ("data.test", raw.data.test.as_ref()),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(cfg(format!("{field}: file not found: {}", p.display())));
                }
            }
        }
        let m = raw.embeddings.len();
        if m == 0 {
            return Err(cfg(
                "embeddings: at least one embedding group is required (--embedding)".into(),
            ));
        }
        for e in &raw.embeddings {
            if !e.path.is_file() {
                return Err(cfg(format!(
                    "embeddings.{}: file not found: {}",
                    e.name,
                    e.path.display()
                )));
            }
        }
        let mut names: Vec<&str> = raw.embeddings.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(cfg("embeddings: group names must be unique".into()));
        }
        match (variant, m) {
            (Variant::Cnn, m) if m != 1 => {
                return Err(cfg(format!(
                    "variant cnn takes exactly one embedding group, got {m}"
                )))
            }
            (Variant::Ccnn, 1) => return Err(cfg("variant ccnn needs at least two embedding groups".into())),
            (Variant::Mg, 1) => warnings.push("variant mg with one embedding group behaves as cnn".into()),
            (Variant::Mgnc, 1) if !raw.allow_single_group => {
                return Err(cfg(
                    "variant mgnc needs at least two embedding groups (set allow_single_group to override)"
                        .into(),
                ))
            }
            _ => {}
        }
    }
    let arity = match variant {
        Variant::Mgnc => raw.embeddings.len().max(1),
        _ => 1,
    };
    let lambda = match &raw.lambda {
        Some(l) if l.len() == arity => l.clone(),
        Some(l) if l.len() == 1 => vec![l[0]; arity],
        Some(l) => {
            return Err(cfg(format!(
                "lambda: variant {variant} with {} groups takes {arity} value(s), got {}",
                raw.embeddings.len(),
                l.len()
            )))
        }
        None => vec![3.0; arity],
    };
    if let Some(bad) = lambda.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(cfg(format!("lambda: values must be positive, got {bad}")));
    }
    let out = raw
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(command));
    Ok(Resolved {
        raw,
        variant,
        train,
        target,
        tokenize,
        precision,
        lambda,
        out,
        warnings,
    })
}
