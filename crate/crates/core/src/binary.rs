//! Binary max-margin topic model trained by augmented collapsed Gibbs
//! sampling.
//!
//! Each iteration draws the weights η from their Gaussian conditional,
//! resamples every token of every document under the supervised conditional
//! and then draws the document's augmentation variable λ_d.

use std::time::Instant;

use rand::Rng;

use crate::corpus::LabeledCorpus;
use crate::posterior::{dot, sweep_document, supervised_conditional, EtaPosterior, MarginTerm};
use crate::predict::{estimate_phi_hat, predict_binary, ModelSnapshot, TaskKind};
use crate::randkit::{sample_augmentation, streams, RngFactory, SamplerRng};
use crate::topic_state::{corpus_words, CountState, Hyperparams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Number of full Gibbs iterations before the classifier is drawn.
    pub burn_in: usize,
    pub hyper: Hyperparams,
    pub seed: u64,
    /// Number of weight draws averaged into the final classifier.
    pub eta_samples: usize,
}

impl TrainConfig {
    pub fn new(hyper: Hyperparams, burn_in: usize, seed: u64) -> Self {
        Self { burn_in, hyper, seed, eta_samples: 1 }
    }

    /// α=1, ℓ=164, c=1, ten burn-in iterations.
    pub fn binary(k: usize, seed: u64) -> Self {
        Self::new(Hyperparams::binary(k), 10, seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.eta_samples == 0 {
            return Err(Error::InvalidParameter("eta_samples must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModelState {
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub counts: CountState,
    /// `ℓ − y_d ηᵀz̄_d`; zero for empty documents.
    pub zeta: Vec<f64>,
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub seconds: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput<S> {
    pub state: S,
    pub snapshot: ModelSnapshot,
    pub log: Vec<IterationRecord>,
}

/// A classifier draw together with the z̄ it was paired with (`None` for
/// empty documents).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub eta: Vec<f64>,
    pub zbars: Vec<Option<Vec<f64>>>,
}

impl PosteriorSample {
    pub fn from_counts(eta: Vec<f64>, counts: &CountState) -> Self {
        let zbars = (0..counts.num_docs()).map(|d| counts.zbar(d).ok()).collect();
        Self { eta, zbars }
    }

    fn discriminant(&self, d: usize) -> Option<f64> {
        self.zbars[d].as_ref().map(|z| dot(&self.eta, z))
    }
}

pub fn compute_zeta(eta: &[f64], zbar: &[f64], y: f64, ell: f64) -> f64 {
    ell - y * dot(eta, zbar)
}

pub(crate) fn check_labels(labels: &[f64], docs: usize) -> Result<()> {
    if labels.len() != docs {
        return Err(Error::Dimension(format!("{} labels for {} documents", labels.len(), docs)));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::Response(format!("binary label must be +1 or -1, got {bad}")));
    }
    Ok(())
}

/// Gaussian conditional of η given assignments and augmentation variables.
/// Empty documents contribute nothing.
pub fn eta_posterior(counts: &CountState, lambda: &[f64], labels: &[f64], hyper: &Hyperparams) -> Result<EtaPosterior> {
    let mut post = EtaPosterior::prior(counts.num_topics(), hyper.nu2);
    for d in 0..counts.num_docs() {
        if counts.doc_len(d) == 0 {
            continue;
        }
        let zbar = counts.zbar(d)?;
        post.accumulate(&zbar, MarginTerm::hinge(labels[d], lambda[d], hyper));
    }
    Ok(post)
}

pub fn draw_eta<R: Rng + ?Sized>(
    rng: &mut R,
    counts: &CountState,
    lambda: &[f64],
    labels: &[f64],
    hyper: &Hyperparams,
) -> Result<Vec<f64>> {
    Ok(eta_posterior(counts, lambda, labels, hyper)?.sample(rng)?.as_slice().to_vec())
}

/// Unnormalized conditional of token `(d, n)`; the token must already be
/// removed from `counts`.
pub fn supervised_token_conditional(
    counts: &CountState,
    eta: &[f64],
    lambda_d: f64,
    y_d: f64,
    hyper: &Hyperparams,
    d: usize,
    n: usize,
) -> Vec<f64> {
    let term = MarginTerm::hinge(y_d, lambda_d, hyper);
    supervised_conditional(counts, hyper, d, n, &[eta.to_vec()], &[term])
}

pub fn draw_lambda<R: Rng + ?Sized>(rng: &mut R, zeta: f64, c: f64) -> Result<f64> {
    sample_augmentation(rng, zeta, c)
}

/// Monte-Carlo estimate of the expected hinge loss `Σ_d E[max(0, ζ_d)]`.
///
/// Per-document averages are formed first, in the same order as
/// [`hinge_of_mean_margin`], so the two can be compared exactly.
pub fn expected_hinge(samples: &[PosteriorSample], labels: &[f64], ell: f64) -> f64 {
    let s = samples.len() as f64;
    (0..labels.len())
        .map(|d| {
            let mut acc = 0.0;
            for sample in samples {
                if let Some(f) = sample.discriminant(d) {
                    acc += (ell - labels[d] * f).max(0.0);
                }
            }
            acc / s
        })
        .sum()
}

/// `Σ_d max(0, mean_s ζ_d)`: the hinge loss of the averaged margin.
pub fn hinge_of_mean_margin(samples: &[PosteriorSample], labels: &[f64], ell: f64) -> f64 {
    let s = samples.len() as f64;
    (0..labels.len())
        .map(|d| {
            let mut acc = 0.0;
            for sample in samples {
                if let Some(f) = sample.discriminant(d) {
                    acc += ell - labels[d] * f;
                }
            }
            (acc / s).max(0.0)
        })
        .sum()
}

pub(crate) fn training_accuracy(counts: &CountState, eta: &[f64], labels: &[f64]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for d in 0..counts.num_docs() {
        if let Ok(z) = counts.zbar(d) {
            total += 1;
            if f64::from(predict_binary(dot(eta, &z))) == labels[d] {
                correct += 1;
            }
        }
    }
    if total == 0 { 0.0 } else { correct as f64 / total as f64 }
}

/// The Gibbs chain for one binary task, exposed step by step so callers can
/// collect posterior samples.
#[derive(Debug, Clone)]
pub struct BinarySampler {
    hyper: Hyperparams,
    labels: Vec<f64>,
    state: BinaryModelState,
    eta_rng: SamplerRng,
    sweep_rng: SamplerRng,
    lambda_rng: SamplerRng,
    weights: Vec<f64>,
}

impl BinarySampler {
    /// Random topic assignments, η = 0 and λ = 1.
    pub fn new(factory: &RngFactory, words: Vec<Vec<usize>>, vocab_size: usize, labels: &[f64], hyper: Hyperparams) -> Result<Self> {
        hyper.validate()?;
        check_labels(labels, words.len())?;
        let counts = CountState::init_random(&mut factory.stream(streams::INIT), words, hyper.k, vocab_size)?;
        let d = counts.num_docs();
        let zeta = (0..d).map(|d| if counts.doc_len(d) == 0 { 0.0 } else { hyper.ell }).collect();
        Ok(Self {
            hyper,
            labels: labels.to_vec(),
            state: BinaryModelState { eta: vec![0.0; hyper.k], lambda: vec![1.0; d], counts, zeta },
            eta_rng: factory.stream(streams::eta(0)),
            sweep_rng: factory.stream(streams::SWEEP),
            lambda_rng: factory.stream(streams::lambda(0)),
            weights: vec![0.0; hyper.k],
        })
    }

    pub fn state(&self) -> &BinaryModelState {
        &self.state
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// One full iteration: draw η, then sweep each document and draw its λ.
    pub fn step(&mut self) -> Result<()> {
        let hyper = self.hyper;
        let st = &mut self.state;
        st.eta = draw_eta(&mut self.eta_rng, &st.counts, &st.lambda, &self.labels, &hyper)?;
        let etas = [st.eta.clone()];
        for d in 0..st.counts.num_docs() {
            if st.counts.doc_len(d) == 0 {
                continue;
            }
            let term = MarginTerm::hinge(self.labels[d], st.lambda[d], &hyper);
            sweep_document(&mut self.sweep_rng, &mut st.counts, &hyper, d, &etas, &[term], &mut self.weights)?;
            st.zeta[d] = compute_zeta(&st.eta, &st.counts.zbar(d)?, self.labels[d], hyper.ell);
            if hyper.c > 0.0 {
                st.lambda[d] = draw_lambda(&mut self.lambda_rng, st.zeta[d], hyper.c)?;
            }
        }
        Ok(())
    }

    pub fn train_accuracy(&self) -> f64 {
        training_accuracy(&self.state.counts, &self.state.eta, &self.labels)
    }

    /// The current η paired with the current assignments.
    pub fn posterior_sample(&self) -> PosteriorSample {
        PosteriorSample::from_counts(self.state.eta.clone(), &self.state.counts)
    }

    /// Draws the final classifier (the average of `samples` draws from the
    /// weight conditional), stores it in the state and refreshes ζ.
    pub fn finalize(mut self, samples: usize) -> Result<BinaryModelState> {
        let st = &mut self.state;
        let post = eta_posterior(&st.counts, &st.lambda, &self.labels, &self.hyper)?;
        let mut eta = vec![0.0; self.hyper.k];
        for _ in 0..samples {
            let draw = post.sample(&mut self.eta_rng)?;
            for (e, v) in eta.iter_mut().zip(draw.iter()) {
                *e += v;
            }
        }
        for e in &mut eta {
            *e /= samples as f64;
        }
        for d in 0..st.counts.num_docs() {
            if let Ok(z) = st.counts.zbar(d) {
                st.zeta[d] = compute_zeta(&eta, &z, self.labels[d], self.hyper.ell);
            }
        }
        st.eta = eta;
        Ok(self.state)
    }
}

pub(crate) fn snapshot_of(task_kind: TaskKind, config: &TrainConfig, counts: &CountState, etas: Vec<Vec<f64>>) -> ModelSnapshot {
    ModelSnapshot {
        task_kind,
        hyper: config.hyper,
        seed: config.seed,
        burn_in: config.burn_in,
        phi_hat: estimate_phi_hat(counts, config.hyper.beta),
        etas,
    }
}

/// Trains on explicit ±1 labels with the given RNG factory.
pub fn train_with_labels(
    factory: &RngFactory,
    words: Vec<Vec<usize>>,
    vocab_size: usize,
    labels: &[f64],
    config: &TrainConfig,
) -> Result<TrainOutput<BinaryModelState>> {
    config.validate()?;
    let mut sampler = BinarySampler::new(factory, words, vocab_size, labels, config.hyper)?;
    let mut log = Vec::with_capacity(config.burn_in);
    for iteration in 1..=config.burn_in {
        let start = Instant::now();
        sampler.step()?;
        let seconds = start.elapsed().as_secs_f64();
        log.push(IterationRecord { iteration, seconds, train_accuracy: sampler.train_accuracy() });
    }
    let state = sampler.finalize(config.eta_samples)?;
    let snapshot = snapshot_of(TaskKind::Binary, config, &state.counts, vec![state.eta.clone()]);
    Ok(TrainOutput { state, snapshot, log })
}

/// Trains a binary model on a corpus with ±1 responses; all randomness comes
/// from `config.seed`.
pub fn train(corpus: &LabeledCorpus, config: &TrainConfig) -> Result<TrainOutput<BinaryModelState>> {
    let labels = corpus.binary_labels()?;
    train_with_labels(&RngFactory::new(config.seed), corpus_words(corpus), corpus.vocab_size(), &labels, config)
}

/// Runs `config.burn_in` iterations and then records `n` consecutive
/// posterior samples, one per further iteration.
pub fn collect_posterior_samples(corpus: &LabeledCorpus, config: &TrainConfig, n: usize) -> Result<Vec<PosteriorSample>> {
    config.validate()?;
    let labels = corpus.binary_labels()?;
    let factory = RngFactory::new(config.seed);
    let mut sampler = BinarySampler::new(&factory, corpus_words(corpus), corpus.vocab_size(), &labels, config.hyper)?;
    for _ in 0..config.burn_in {
        sampler.step()?;
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        sampler.step()?;
        out.push(sampler.posterior_sample());
    }
    Ok(out)
}
