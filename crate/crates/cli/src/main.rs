//! `medlda`: train, predict, evaluate and benchmark max-margin topic models.

mod bench;
mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use medlda::binary::{self, IterationRecord};
use medlda::corpus::{load_bow, LabeledCorpus, Response};
use medlda::metrics::{accuracy, mean_std, predictive_r2, prf1_multilabel, EvalReport};
use medlda::multitask::{train_multitask, train_one_vs_all};
use medlda::persistence::{load_snapshots, save_snapshots};
use medlda::predict::{predict_documents, ModelSnapshot, Prediction, TaskKind, TestInferenceConfig};
use medlda::randkit::RngFactory;
use medlda::regression::{cross_validate_c, train_regression, C_GRID};
use rayon::prelude::*;

use crate::config::{ConfigError, Driver, RunArgs, Task};

#[derive(Debug, Parser)]
#[command(name = "medlda", version, about = "Max-margin supervised topic models trained by Gibbs sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write its snapshot and per-iteration log
    Train(RunArgs),
    /// Predict every document of a test corpus
    Predict(PredictArgs),
    /// Score a predictions file against the true labels
    Eval(EvalArgs),
    /// Time training sweeps on synthetic corpora
    Bench(bench::BenchArgs),
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Snapshot file written by `train`
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Predictions file written by `predict`
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    let path = path.as_deref().ok_or_else(|| usage(format!("{flag} is required")))?;
    if !path.is_file() {
        return Err(usage(format!("{flag}: no such file {}", path.display())));
    }
    Ok(path)
}

fn output_path(path: &Option<PathBuf>) -> Result<&Path> {
    path.as_deref().ok_or_else(|| usage("--out is required"))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Loads a corpus, returning `None` when the file holds no documents.
fn load_corpus(args: &RunArgs, task: Task, path: &Path, labels: Option<&Path>, vocab_size: Option<usize>) -> Result<Option<LabeledCorpus>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim().is_empty() {
        return Ok(None);
    }
    let mut opts = args.load_options(task, labels)?;
    if vocab_size.is_some() {
        opts.vocab_size = vocab_size;
    }
    let corpus = load_bow(path, &opts).with_context(|| format!("loading {}", path.display()))?;
    Ok(Some(corpus))
}

fn task_of(kind: TaskKind) -> Task {
    match kind {
        TaskKind::Binary => Task::Binary,
        TaskKind::Multiclass => Task::Multiclass,
        TaskKind::Multilabel => Task::Multilabel,
        TaskKind::Regression => Task::Regression,
    }
}

fn inferred_tasks(corpus: &LabeledCorpus) -> usize {
    corpus
        .responses
        .iter()
        .map(|r| match r {
            Response::Class(c) => c + 1,
            Response::Labels(ls) => ls.iter().max().map_or(0, |m| m + 1),
            _ => 1,
        })
        .max()
        .unwrap_or(1)
}

fn to_response(p: &Prediction) -> Response {
    match p {
        Prediction::Binary(y) => Response::Binary(*y),
        Prediction::Class(c) => Response::Class(*c),
        Prediction::Labels(ls) => Response::Labels(ls.clone()),
        Prediction::Real(v) => Response::Real(*v),
    }
}

fn evaluate(task: Task, pred: &[Response], truth: &[Response]) -> Result<EvalReport> {
    if pred.len() != truth.len() {
        bail!("{} predictions but {} true labels", pred.len(), truth.len());
    }
    let report = match task {
        Task::Binary | Task::Multiclass => EvalReport::accuracy(accuracy(pred, truth)?),
        Task::Regression => {
            let real = |rs: &[Response]| rs.iter().map(|r| if let Response::Real(v) = r { *v } else { f64::NAN }).collect::<Vec<_>>();
            EvalReport::regression(predictive_r2(&real(pred), &real(truth))?)
        }
        Task::Multilabel => {
            let sets = |rs: &[Response]| rs.iter().map(|r| if let Response::Labels(l) = r { l.clone() } else { Vec::new() }).collect::<Vec<_>>();
            EvalReport::multilabel(&prf1_multilabel(&sets(pred), &sets(truth))?)
        }
    };
    Ok(report)
}

fn write_log(path: &Path, log: &[IterationRecord]) -> Result<()> {
    let mut out = String::from("iteration\tseconds\ttrain_accuracy\n");
    for r in log {
        out.push_str(&format!("{}\t{:.6}\t{:.6}\n", r.iteration, r.seconds, r.train_accuracy));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

struct RunResult {
    snapshots: Vec<ModelSnapshot>,
    log: Vec<IterationRecord>,
}

fn train_once(args: &RunArgs, task: Task, corpus: &LabeledCorpus, num_tasks: usize, config: &binary::TrainConfig) -> Result<RunResult> {
    let driver = args.driver.unwrap_or(Driver::Multitask);
    Ok(match task {
        Task::Binary => {
            let out = binary::train(corpus, config)?;
            RunResult { snapshots: vec![out.snapshot], log: out.log }
        }
        Task::Regression => {
            let out = train_regression(corpus, config)?;
            RunResult { snapshots: vec![out.snapshot], log: out.log }
        }
        Task::Multiclass | Task::Multilabel if driver == Driver::OneVsAll => {
            RunResult { snapshots: train_one_vs_all(corpus, num_tasks, config, args.workers())?, log: Vec::new() }
        }
        Task::Multiclass | Task::Multilabel => {
            let out = train_multitask(corpus, num_tasks, config)?;
            RunResult { snapshots: vec![out.snapshot], log: out.log }
        }
    })
}

fn inference_config(args: &RunArgs) -> TestInferenceConfig {
    TestInferenceConfig { n_samples: args.samples.unwrap_or(1), ..TestInferenceConfig::default() }
}

fn cmd_train(args: RunArgs) -> Result<()> {
    let args = args.resolve()?;
    let task = args.task()?;
    let data = required(&args.data, "--data")?;
    let out = output_path(&args.out)?.to_path_buf();
    let labels = args.labels.clone();
    let mut config = args.train_config(task)?;
    let runs = args.runs.unwrap_or(1);
    if runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    if task != Task::Multilabel && task != Task::Multiclass && args.driver == Some(Driver::OneVsAll) {
        return Err(usage("--driver one-vs-all applies to multiclass and multilabel tasks"));
    }
    let corpus = load_corpus(&args, task, data, labels.as_deref(), None)?.context("training corpus has no documents")?;
    let num_tasks = match task {
        Task::Binary | Task::Regression => 1,
        _ => args.tasks.unwrap_or_else(|| inferred_tasks(&corpus)),
    };
    let test = match &args.test {
        Some(_) => load_corpus(&args, task, required(&args.test, "--test")?, args.test_labels.as_deref(), Some(corpus.vocab_size()))?,
        None => None,
    };
    let infer = inference_config(&args);
    infer.validate().map_err(|e| usage(e.to_string()))?;

    if let Some(folds) = args.cv_folds {
        if task != Task::Regression {
            return Err(usage("--cv-folds applies to regression"));
        }
        let (grid, best) = cross_validate_c(&corpus, &config, &C_GRID, folds, &infer)?;
        for (c, r2) in &grid {
            println!("cv\tc={c}\tmean_predictive_r2={r2:.6}");
        }
        config.hyper.c = grid[best].0;
        println!("cv\tchosen c={}", config.hyper.c);
    }

    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.workers()).build()?;
    let results: Vec<Result<(RunResult, Option<EvalReport>)>> = pool.install(|| {
        (0..runs)
            .into_par_iter()
            .map(|r| {
                let cfg = binary::TrainConfig { seed: config.seed.wrapping_add(r as u64), ..config };
                let result = train_once(&args, task, &corpus, num_tasks, &cfg)?;
                let report = match &test {
                    Some(t) => {
                        let preds = predict_documents(&result.snapshots, &t.docs, &infer, &RngFactory::new(cfg.seed))?;
                        let preds: Vec<Response> = preds.iter().map(to_response).collect();
                        Some(evaluate(task, &preds, &t.responses)?)
                    }
                    None => None,
                };
                Ok((result, report))
            })
            .collect()
    });

    let mut reports = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        let (result, report) = res?;
        let path = if runs == 1 { out.clone() } else { with_suffix(&out, &format!(".run{r}")) };
        save_snapshots(&result.snapshots, &path).with_context(|| format!("writing {}", path.display()))?;
        write_log(&with_suffix(&path, ".log.tsv"), &result.log)?;
        let seed = config.seed.wrapping_add(r as u64);
        match &report {
            Some(rep) => {
                let cells: Vec<String> = rep.entries.iter().map(|(n, v)| format!("{n}={v:.6}")).collect();
                println!("run\t{r}\tseed={seed}\t{}", cells.join("\t"));
                reports.push(rep.clone());
            }
            None => println!("run\t{r}\tseed={seed}\tmodel={}", path.display()),
        }
    }
    if let Some(first) = reports.first() {
        for (name, _) in &first.entries {
            let vals: Vec<f64> = reports.iter().filter_map(|r| r.get(name)).collect();
            let (mean, std) = mean_std(&vals);
            println!("summary\t{name}\t{mean:.6} ± {std:.6}");
        }
    }
    Ok(())
}

fn cmd_predict(p: PredictArgs) -> Result<()> {
    let args = p.run.resolve()?;
    let model = required(&p.model, "--model")?;
    let test = required(&args.test, "--test")?;
    let out = output_path(&args.out)?;
    let snapshots = load_snapshots(model).with_context(|| format!("loading {}", model.display()))?;
    let first = snapshots.first().context("snapshot file holds no models")?;
    let task = task_of(first.task_kind);
    if args.task.is_some_and(|t| t != task) {
        return Err(usage(format!("--task does not match the model's task {task:?}")));
    }
    let infer = inference_config(&args);
    infer.validate().map_err(|e| usage(e.to_string()))?;
    let mut text = String::new();
    if let Some(corpus) = load_corpus(&args, task, test, args.test_labels.as_deref(), Some(first.vocab_size()))? {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(args.workers()).build()?;
        let factory = RngFactory::new(args.seed.unwrap_or(first.seed));
        let preds = pool.install(|| predict_documents(&snapshots, &corpus.docs, &infer, &factory))?;
        for (doc, pred) in corpus.docs.iter().zip(&preds) {
            text.push_str(&format!("{}\t{pred}\n", doc.doc_id));
        }
    }
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))
}

fn first_tokens(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().filter_map(|l| l.split_whitespace().next()).map(str::to_string).collect())
}

fn parse_responses(tokens: &[String], task: Task, what: &str) -> Result<Vec<Response>> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, t)| Response::parse(t, task.label_kind()).with_context(|| format!("{what} line {}: bad label {t:?}", i + 1)))
        .collect()
}

fn cmd_eval(e: EvalArgs) -> Result<()> {
    let args = e.run.resolve()?;
    let task = args.task()?;
    let preds_path = required(&e.predictions, "--predictions")?;
    let truth_path = if args.labels.is_some() { required(&args.labels, "--labels")? } else { required(&args.test, "--test")? };
    let text = fs::read_to_string(preds_path).with_context(|| format!("reading {}", preds_path.display()))?;
    let pred_tokens: Vec<String> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split('\t').nth(1).unwrap_or("").trim().to_string())
        .collect();
    let pred = parse_responses(&pred_tokens, task, "predictions")?;
    let truth = parse_responses(&first_tokens(truth_path)?, task, "truth")?;
    if pred.len() != truth.len() {
        bail!("{} predictions but {} true labels", pred.len(), truth.len());
    }
    if pred.is_empty() {
        bail!("nothing to evaluate");
    }
    print!("{}", evaluate(task, &pred, &truth)?);
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|c| c.is::<ConfigError>()) {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => bench::run(a),
    };
    match result {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
