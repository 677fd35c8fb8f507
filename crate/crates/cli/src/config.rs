//! Run configuration: command-line flags override a `key=value` config file,
//! which overrides the per-task defaults.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use medlda::binary::TrainConfig;
use medlda::corpus::{Format, LabelKind, LoadOptions};
use medlda::topic_state::Hyperparams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Binary,
    Multiclass,
    Multilabel,
    Regression,
}

impl Task {
    pub fn label_kind(self) -> LabelKind {
        match self {
            Task::Binary => LabelKind::Binary,
            Task::Multiclass => LabelKind::Class,
            Task::Multilabel => LabelKind::MultiLabel,
            Task::Regression => LabelKind::Real,
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Task as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Driver {
    /// One set of topics shared by all classifiers.
    Multitask,
    /// One independent binary model per class, trained in parallel.
    OneVsAll,
}

impl FromStr for Driver {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Driver as ValueEnum>::from_str(s, true)
    }
}

/// Options shared by every subcommand that trains or loads data. All are
/// optional so unset flags can fall back to the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Task kind [binary, multiclass, multilabel, regression]
    #[arg(long)]
    pub task: Option<Task>,
    /// Training corpus
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Held-out corpus
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Corpus format [svmlight, uci-bow]
    #[arg(long)]
    pub format: Option<String>,
    /// Label file for uci-bow corpora (one label per line)
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Label file for a uci-bow test corpus
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    /// Vocabulary size (default: one past the largest term index)
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Number of topics
    #[arg(long)]
    pub topics: Option<usize>,
    /// Number of tasks (classes or labels); inferred from the data if unset
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Multi-class / multi-label driver [multitask, one-vs-all]
    #[arg(long)]
    pub driver: Option<Driver>,
    /// Document-topic prior (split evenly over topics)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Topic-term prior
    #[arg(long)]
    pub beta: Option<f64>,
    /// Prior variance of the classifier weights
    #[arg(long)]
    pub nu2: Option<f64>,
    /// Regularization constant
    #[arg(long)]
    pub c: Option<f64>,
    /// Margin cost ℓ
    #[arg(long)]
    pub ell: Option<f64>,
    /// Insensitivity width of the regression loss
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Burn-in iterations before the classifier is drawn
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Random seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Topic samples averaged per test document
    #[arg(long)]
    pub samples: Option<usize>,
    /// Worker threads
    #[arg(long)]
    pub workers: Option<usize>,
    /// Repeat training with seeds seed, seed+1, ...
    #[arg(long)]
    pub runs: Option<usize>,
    /// Output path
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Choose c by k-fold cross-validation over {1/16, 1/4, 1, 4, 16} (regression)
    #[arg(long)]
    pub cv_folds: Option<usize>,
    /// key=value configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_config_text(text: &str) -> Result<HashMap<String, String>, ConfigError> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("config line {}: expected key=value", i + 1)))?;
        map.insert(k.trim().replace('_', "-"), v.trim().to_string());
    }
    Ok(map)
}

const KNOWN_KEYS: &[&str] = &[
    "task", "data", "test", "format", "labels", "test-labels", "vocab-size", "topics", "tasks", "driver", "alpha", "beta",
    "nu2", "c", "ell", "epsilon", "burnin", "seed", "samples", "workers", "runs", "out", "cv-folds",
];

fn from_file<T: FromStr>(file: &HashMap<String, String>, key: &str) -> Result<Option<T>, ConfigError> {
    match file.get(key) {
        None => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| ConfigError(format!("config key {key}: cannot parse {v:?}"))),
    }
}

macro_rules! merge {
    ($args:ident, $file:ident, $($field:ident => $key:literal),* $(,)?) => {
        $( if $args.$field.is_none() { $args.$field = from_file(&$file, $key)?; } )*
    };
}

impl RunArgs {
    /// Fills every unset flag from the config file, if one was given.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let text = std::fs::read_to_string(&path).map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let file = parse_config_text(&text)?;
        if let Some(bad) = file.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(ConfigError(format!("unknown config key {bad:?}")));
        }
        let args = &mut self;
        merge!(args, file,
            task => "task", data => "data", test => "test", format => "format", labels => "labels",
            test_labels => "test-labels", vocab_size => "vocab-size", topics => "topics", tasks => "tasks",
            driver => "driver", alpha => "alpha", beta => "beta", nu2 => "nu2", c => "c", ell => "ell",
            epsilon => "epsilon", burnin => "burnin", seed => "seed", samples => "samples", workers => "workers",
            runs => "runs", out => "out", cv_folds => "cv-folds",
        );
        Ok(self)
    }

    pub fn task(&self) -> Result<Task, ConfigError> {
        self.task.ok_or_else(|| ConfigError("--task is required".into()))
    }

    pub fn format(&self) -> Result<Format, ConfigError> {
        self.format.as_deref().unwrap_or("svmlight").parse().map_err(|e: medlda::Error| ConfigError(e.to_string()))
    }

    pub fn load_options(&self, task: Task, labels: Option<&Path>) -> Result<LoadOptions, ConfigError> {
        Ok(LoadOptions {
            format: self.format()?,
            label_kind: task.label_kind(),
            vocab_size: self.vocab_size,
            labels_path: labels.map(Path::to_path_buf),
        })
    }

    pub fn hyperparams(&self, task: Task) -> Hyperparams {
        let k = self.topics.unwrap_or(20);
        let base = match task {
            Task::Binary => Hyperparams::binary(k),
            Task::Multiclass | Task::Multilabel => Hyperparams::multiclass(k),
            Task::Regression => Hyperparams::regression(k),
        };
        Hyperparams {
            k,
            alpha: self.alpha.unwrap_or(base.alpha),
            beta: self.beta.unwrap_or(base.beta),
            nu2: self.nu2.unwrap_or(base.nu2),
            c: self.c.unwrap_or(base.c),
            ell: self.ell.unwrap_or(base.ell),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
        }
    }

    /// Burn-in defaults: 10 for binary and regression, 20 for multi-class,
    /// 40 for multi-label.
    pub fn train_config(&self, task: Task) -> Result<TrainConfig, ConfigError> {
        let hyper = self.hyperparams(task);
        hyper.validate().map_err(|e| ConfigError(e.to_string()))?;
        let default_burn_in = match task {
            Task::Binary | Task::Regression => 10,
            Task::Multiclass => 20,
            Task::Multilabel => 40,
        };
        Ok(TrainConfig::new(hyper, self.burnin.unwrap_or(default_burn_in), self.seed.unwrap_or(0)))
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).max(1)
    }
}
