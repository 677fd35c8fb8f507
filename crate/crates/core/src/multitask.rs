//! Several binary max-margin classifiers over one shared topic
//! representation, the one-vs-all driver, and the reductions from
//! multi-class and multi-label responses to ±1 task labels.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::binary::{self, check_labels, compute_zeta, snapshot_of, training_accuracy, IterationRecord, TrainConfig, TrainOutput};
use crate::corpus::{LabelKind, LabeledCorpus, Response};
use crate::posterior::{sweep_document, supervised_conditional, MarginTerm};
use crate::predict::{predict_multiclass, ModelSnapshot, TaskKind};
use crate::randkit::{sample_augmentation, streams, RngFactory, SamplerRng};
use crate::topic_state::{corpus_words, CountState, Hyperparams};
use crate::{Error, Result};

impl TrainConfig {
    /// ℓ=64 and twenty burn-in iterations.
    pub fn multiclass(k: usize, seed: u64) -> Self {
        Self::new(Hyperparams::multiclass(k), 20, seed)
    }

    /// Multi-class hyperparameters with forty burn-in iterations.
    pub fn multilabel(k: usize, seed: u64) -> Self {
        Self::new(Hyperparams::multiclass(k), 40, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskState {
    /// One weight vector per task.
    pub etas: Vec<Vec<f64>>,
    /// `lambdas[i][d]` for task `i`, document `d`.
    pub lambdas: Vec<Vec<f64>>,
    pub counts: CountState,
    pub task_labels: Vec<Vec<f64>>,
}

/// Row `i` is +1 where the document's class is `i` and −1 elsewhere.
pub fn labels_from_multiclass(responses: &[Response], num_tasks: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![vec![-1.0; responses.len()]; num_tasks];
    for (d, r) in responses.iter().enumerate() {
        match r {
            Response::Class(c) if *c < num_tasks => out[*c][d] = 1.0,
            Response::Class(c) => return Err(Error::Response(format!("class {c} outside [0, {num_tasks})"))),
            other => return Err(Error::Response(format!("expected a class label, got {}", other.token()))),
        }
    }
    Ok(out)
}

/// Row `i` is +1 where category `i` is in the document's label set.
pub fn labels_from_multilabel(responses: &[Response], num_tasks: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![vec![-1.0; responses.len()]; num_tasks];
    for (d, r) in responses.iter().enumerate() {
        match r {
            Response::Labels(ls) => {
                for &l in ls {
                    if l >= num_tasks {
                        return Err(Error::Response(format!("label {l} outside [0, {num_tasks})")));
                    }
                    out[l][d] = 1.0;
                }
            }
            other => return Err(Error::Response(format!("expected a label set, got {}", other.token()))),
        }
    }
    Ok(out)
}

/// Task labels for a multi-class or multi-label corpus.
pub fn task_labels(corpus: &LabeledCorpus, num_tasks: usize) -> Result<(TaskKind, Vec<Vec<f64>>)> {
    match corpus.label_kind() {
        Some(LabelKind::Class) => Ok((TaskKind::Multiclass, labels_from_multiclass(&corpus.responses, num_tasks)?)),
        Some(LabelKind::MultiLabel) => Ok((TaskKind::Multilabel, labels_from_multilabel(&corpus.responses, num_tasks)?)),
        Some(LabelKind::Binary) if num_tasks == 1 => Ok((TaskKind::Multiclass, vec![corpus.binary_labels()?])),
        _ => Err(Error::Response("multi-task training needs class or label-set responses".into())),
    }
}

pub fn draw_eta_task<R: Rng + ?Sized>(
    rng: &mut R,
    counts: &CountState,
    lambdas_i: &[f64],
    task_labels_i: &[f64],
    hyper: &Hyperparams,
) -> Result<Vec<f64>> {
    binary::draw_eta(rng, counts, lambdas_i, task_labels_i, hyper)
}

/// Unnormalized conditional of token `(d, n)` (already removed from
/// `counts`): the LDA factor times one supervised factor per task.
pub fn token_conditional_mt(
    counts: &CountState,
    etas: &[Vec<f64>],
    lambdas_col_d: &[f64],
    task_labels_col_d: &[f64],
    hyper: &Hyperparams,
    d: usize,
    n: usize,
) -> Vec<f64> {
    let terms: Vec<MarginTerm> =
        lambdas_col_d.iter().zip(task_labels_col_d).map(|(&l, &y)| MarginTerm::hinge(y, l, hyper)).collect();
    supervised_conditional(counts, hyper, d, n, etas, &terms)
}

pub fn draw_lambda_mt<R: Rng + ?Sized>(rng: &mut R, zeta: f64, c: f64) -> Result<f64> {
    sample_augmentation(rng, zeta, c)
}

/// The shared-topic chain. Task `i` draws its weights from stream
/// `eta(i)` and its augmentation variables from `lambda(i)`; tokens share the
/// sweep stream. With one task this consumes randomness exactly as
/// [`binary::BinarySampler`] does.
#[derive(Debug, Clone)]
pub struct MultiTaskSampler {
    hyper: Hyperparams,
    state: MultiTaskState,
    eta_rngs: Vec<SamplerRng>,
    lambda_rngs: Vec<SamplerRng>,
    sweep_rng: SamplerRng,
    weights: Vec<f64>,
}

impl MultiTaskSampler {
    pub fn new(factory: &RngFactory, words: Vec<Vec<usize>>, vocab_size: usize, task_labels: Vec<Vec<f64>>, hyper: Hyperparams) -> Result<Self> {
        hyper.validate()?;
        if task_labels.is_empty() {
            return Err(Error::InvalidParameter("multi-task training needs at least one task".into()));
        }
        for row in &task_labels {
            check_labels(row, words.len())?;
        }
        let l = task_labels.len();
        let counts = CountState::init_random(&mut factory.stream(streams::INIT), words, hyper.k, vocab_size)?;
        let d = counts.num_docs();
        Ok(Self {
            hyper,
            state: MultiTaskState { etas: vec![vec![0.0; hyper.k]; l], lambdas: vec![vec![1.0; d]; l], counts, task_labels },
            eta_rngs: (0..l).map(|i| factory.stream(streams::eta(i))).collect(),
            lambda_rngs: (0..l).map(|i| factory.stream(streams::lambda(i))).collect(),
            sweep_rng: factory.stream(streams::SWEEP),
            weights: vec![0.0; hyper.k],
        })
    }

    pub fn state(&self) -> &MultiTaskState {
        &self.state
    }

    fn draw_etas(&mut self) -> Result<Vec<Vec<f64>>> {
        let st = &self.state;
        let hyper = self.hyper;
        self.eta_rngs
            .par_iter_mut()
            .enumerate()
            .map(|(i, rng)| draw_eta_task(rng, &st.counts, &st.lambdas[i], &st.task_labels[i], &hyper))
            .collect()
    }

    /// Draw every η_i, sweep all tokens, then draw every λ_d^i.
    pub fn step(&mut self) -> Result<()> {
        let hyper = self.hyper;
        self.state.etas = self.draw_etas()?;
        let st = &mut self.state;
        let l = st.etas.len();
        let mut terms = vec![MarginTerm::ZERO; l];
        for d in 0..st.counts.num_docs() {
            if st.counts.doc_len(d) == 0 {
                continue;
            }
            for i in 0..l {
                terms[i] = MarginTerm::hinge(st.task_labels[i][d], st.lambdas[i][d], &hyper);
            }
            sweep_document(&mut self.sweep_rng, &mut st.counts, &hyper, d, &st.etas, &terms, &mut self.weights)?;
        }
        if hyper.c > 0.0 {
            let zbars: Vec<Option<Vec<f64>>> = (0..st.counts.num_docs()).map(|d| st.counts.zbar(d).ok()).collect();
            let (etas, labels) = (&st.etas, &st.task_labels);
            st.lambdas
                .par_iter_mut()
                .zip(self.lambda_rngs.par_iter_mut())
                .enumerate()
                .try_for_each(|(i, (lambdas, rng))| -> Result<()> {
                    for (d, z) in zbars.iter().enumerate() {
                        if let Some(z) = z {
                            let zeta = compute_zeta(&etas[i], z, labels[i][d], hyper.ell);
                            lambdas[d] = draw_lambda_mt(rng, zeta, hyper.c)?;
                        }
                    }
                    Ok(())
                })?;
        }
        Ok(())
    }

    /// Training accuracy of the argmax rule for multi-class labels, or the
    /// mean per-task accuracy otherwise.
    pub fn train_accuracy(&self, kind: TaskKind) -> f64 {
        let st = &self.state;
        if kind == TaskKind::Multiclass && st.etas.len() > 1 {
            let mut correct = 0usize;
            let mut total = 0usize;
            for d in 0..st.counts.num_docs() {
                if let Ok(z) = st.counts.zbar(d) {
                    total += 1;
                    let disc: Vec<f64> = st.etas.iter().map(|e| crate::posterior::dot(e, &z)).collect();
                    if st.task_labels[predict_multiclass(&disc)][d] > 0.0 {
                        correct += 1;
                    }
                }
            }
            return if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        }
        let l = st.etas.len() as f64;
        st.etas.iter().zip(&st.task_labels).map(|(e, y)| training_accuracy(&st.counts, e, y)).sum::<f64>() / l
    }

    pub fn finalize(mut self, samples: usize) -> Result<MultiTaskState> {
        let st = &self.state;
        let hyper = self.hyper;
        let etas = self
            .eta_rngs
            .par_iter_mut()
            .enumerate()
            .map(|(i, rng)| {
                let post = binary::eta_posterior(&st.counts, &st.lambdas[i], &st.task_labels[i], &hyper)?;
                let mut eta = vec![0.0; hyper.k];
                for _ in 0..samples {
                    for (e, v) in eta.iter_mut().zip(post.sample(rng)?.iter()) {
                        *e += v;
                    }
                }
                for e in &mut eta {
                    *e /= samples as f64;
                }
                Ok(eta)
            })
            .collect::<Result<Vec<_>>>()?;
        self.state.etas = etas;
        Ok(self.state)
    }
}

pub fn train_multitask_with_labels(
    factory: &RngFactory,
    words: Vec<Vec<usize>>,
    vocab_size: usize,
    task_labels: Vec<Vec<f64>>,
    kind: TaskKind,
    config: &TrainConfig,
) -> Result<TrainOutput<MultiTaskState>> {
    config.validate()?;
    let mut sampler = MultiTaskSampler::new(factory, words, vocab_size, task_labels, config.hyper)?;
    let mut log = Vec::with_capacity(config.burn_in);
    for iteration in 1..=config.burn_in {
        let start = Instant::now();
        sampler.step()?;
        let seconds = start.elapsed().as_secs_f64();
        log.push(IterationRecord { iteration, seconds, train_accuracy: sampler.train_accuracy(kind) });
    }
    let state = sampler.finalize(config.eta_samples)?;
    let snapshot = snapshot_of(kind, config, &state.counts, state.etas.clone());
    Ok(TrainOutput { state, snapshot, log })
}

/// Trains `num_tasks` classifiers sharing one set of topics.
pub fn train_multitask(corpus: &LabeledCorpus, num_tasks: usize, config: &TrainConfig) -> Result<TrainOutput<MultiTaskState>> {
    let (kind, labels) = task_labels(corpus, num_tasks)?;
    train_multitask_with_labels(&RngFactory::new(config.seed), corpus_words(corpus), corpus.vocab_size(), labels, kind, config)
}

/// Trains one independent binary model per task on `workers` threads. Task
/// `i` draws from `RngFactory::new(seed).child(i)`, so the snapshots do not
/// depend on the worker count.
pub fn train_one_vs_all(corpus: &LabeledCorpus, num_tasks: usize, config: &TrainConfig, workers: usize) -> Result<Vec<ModelSnapshot>> {
    if num_tasks < 2 {
        return Err(Error::InvalidParameter("one-vs-all needs at least two tasks".into()));
    }
    config.validate()?;
    let (kind, labels) = task_labels(corpus, num_tasks)?;
    let factory = RngFactory::new(config.seed);
    let words = corpus_words(corpus);
    let v = corpus.vocab_size();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        labels
            .par_iter()
            .enumerate()
            .map(|(i, y)| {
                let out = binary::train_with_labels(&factory.child(i as u64), words.clone(), v, y, config)?;
                Ok(ModelSnapshot { task_kind: kind, ..out.snapshot })
            })
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_svmlight;

    fn toy() -> LabeledCorpus {
        parse_svmlight("0 0:3 1:2\n1 2:3 3:2\n2 4:4 5:1\n0 0:1 1:4\n1 3:5\n2 5:3\n", LabelKind::Class, Some(6)).unwrap()
    }

    #[test]
    fn multiclass_encoding() {
        let rows = labels_from_multiclass(&[Response::Class(2)], 4).unwrap();
        assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![-1.0, -1.0, 1.0, -1.0]);
        let rows = labels_from_multiclass(&[Response::Class(0), Response::Class(0)], 1).unwrap();
        assert_eq!(rows, vec![vec![1.0, 1.0]]);
        assert!(labels_from_multiclass(&[Response::Class(3)], 3).is_err());
        let rows = labels_from_multiclass(&toy().responses, 3).unwrap();
        for d in 0..6 {
            assert_eq!(rows.iter().filter(|r| r[d] > 0.0).count(), 1);
        }
    }

    #[test]
    fn multilabel_encoding() {
        let rows = labels_from_multilabel(&[Response::Labels(vec![0, 2]), Response::Labels(vec![])], 3).unwrap();
        assert_eq!(rows, vec![vec![1.0, -1.0], vec![-1.0, -1.0], vec![1.0, -1.0]]);
        assert!(labels_from_multilabel(&[Response::Labels(vec![5])], 3).is_err());
    }

    #[test]
    fn one_vs_all_is_independent_of_workers() {
        let c = toy();
        let cfg = TrainConfig::new(Hyperparams::multiclass(3), 3, 4);
        let a = train_one_vs_all(&c, 3, &cfg, 1).unwrap();
        let b = train_one_vs_all(&c, 3, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(train_one_vs_all(&c, 1, &cfg, 1).is_err());
    }

    #[test]
    fn multitask_training_runs() {
        let c = toy();
        let cfg = TrainConfig::new(Hyperparams::multiclass(3), 3, 4);
        let out = train_multitask(&c, 3, &cfg).unwrap();
        assert_eq!(out.snapshot.etas.len(), 3);
        assert!(out.state.lambdas.iter().flatten().all(|&l| l > 0.0));
        assert_eq!(out.snapshot, train_multitask(&c, 3, &cfg).unwrap().snapshot);
    }
}
