//! Timing table for training sweeps on synthetic corpora.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::Args;
use medlda::binary::{BinarySampler, TrainConfig};
use medlda::multitask::{task_labels, train_one_vs_all, MultiTaskSampler};
use medlda::randkit::RngFactory;
use medlda::synthetic::{binary_benchmark, multiclass_benchmark, BinaryBenchmarkConfig, MulticlassBenchmarkConfig};
use medlda::topic_state::{corpus_words, Hyperparams};

use crate::config::ConfigError;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Training-set sizes in documents
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000")]
    pub sizes: Vec<usize>,
    /// Topic counts to time
    #[arg(long, value_delimiter = ',', default_value = "20")]
    pub topics: Vec<usize>,
    /// Number of classes for the multi-task and one-vs-all rows
    #[arg(long, default_value_t = 4)]
    pub tasks: usize,
    /// Worker count compared against one worker for one-vs-all
    #[arg(long)]
    pub workers: Option<usize>,
    /// Timed iterations per row; the fastest is reported
    #[arg(long, default_value_t = 3)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the table here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

struct Row {
    kind: &'static str,
    docs: usize,
    tokens: usize,
    topics: usize,
    tasks: usize,
    workers: usize,
    seconds: f64,
}

fn fastest(iters: usize, mut step: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..iters {
        let t = Instant::now();
        step()?;
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

pub fn run(args: BenchArgs) -> Result<()> {
    if args.sizes.is_empty() || args.topics.is_empty() || args.iters == 0 || args.tasks < 2 {
        return Err(ConfigError("bench needs sizes, topics, iters >= 1 and tasks >= 2".into()).into());
    }
    if args.sizes.iter().chain(&args.topics).any(|&x| x == 0) {
        return Err(ConfigError("sizes and topic counts must be positive".into()).into());
    }
    let workers = args.workers.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).max(1);
    let factory = RngFactory::new(args.seed);
    let mut rows = Vec::new();
    for &docs in &args.sizes {
        let bin_cfg = BinaryBenchmarkConfig { train_docs: docs, test_docs: 0, ..Default::default() };
        let (bin, _) = binary_benchmark(args.seed, &bin_cfg)?;
        let mc_cfg = MulticlassBenchmarkConfig { num_classes: args.tasks, train_docs: docs, test_docs: 0, ..Default::default() };
        let (mc, _) = multiclass_benchmark(args.seed, &mc_cfg)?;
        for &k in &args.topics {
            let labels = bin.binary_labels()?;
            let mut s = BinarySampler::new(&factory, corpus_words(&bin), bin.vocab_size(), &labels, Hyperparams::binary(k))?;
            let seconds = fastest(args.iters, || Ok(s.step()?))?;
            rows.push(Row { kind: "binary_sweep", docs, tokens: bin.total_tokens(), topics: k, tasks: 1, workers: 1, seconds });

            let (_, task_rows) = task_labels(&mc, args.tasks)?;
            let mut s = MultiTaskSampler::new(&factory, corpus_words(&mc), mc.vocab_size(), task_rows, Hyperparams::multiclass(k))?;
            let seconds = fastest(args.iters, || Ok(s.step()?))?;
            rows.push(Row { kind: "multitask_sweep", docs, tokens: mc.total_tokens(), topics: k, tasks: args.tasks, workers: 1, seconds });
        }
    }

    let docs = args.sizes[0];
    let k = args.topics[0];
    let mc_cfg = MulticlassBenchmarkConfig { num_classes: args.tasks, train_docs: docs, test_docs: 0, ..Default::default() };
    let (mc, _) = multiclass_benchmark(args.seed, &mc_cfg)?;
    let config = TrainConfig::new(Hyperparams::multiclass(k), args.iters, args.seed);
    let mut counts = vec![1];
    if workers > 1 {
        counts.push(workers);
    }
    for w in counts {
        let seconds = fastest(1, || {
            train_one_vs_all(&mc, args.tasks, &config, w)?;
            Ok(())
        })?;
        rows.push(Row { kind: "one_vs_all_train", docs, tokens: mc.total_tokens(), topics: k, tasks: args.tasks, workers: w, seconds });
    }

    let mut table = String::from("kind\tdocs\ttokens\ttopics\ttasks\tworkers\tseconds\n");
    for r in &rows {
        table.push_str(&format!("{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\n", r.kind, r.docs, r.tokens, r.topics, r.tasks, r.workers, r.seconds));
    }
    match &args.out {
        Some(path) => fs::write(path, table)?,
        None => print!("{table}"),
    }
    Ok(())
}
