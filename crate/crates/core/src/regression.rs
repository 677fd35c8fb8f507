//! Max-margin topic regression with the epsilon-insensitive loss.
//!
//! The two one-sided hinges `max(0, Δ − ε)` and `max(0, −Δ − ε)` each get
//! their own augmentation variable, λ_d and ω_d.

use std::time::Instant;

use rand::Rng;

use crate::binary::{snapshot_of, IterationRecord, TrainConfig, TrainOutput};
use crate::corpus::LabeledCorpus;
use crate::metrics::predictive_r2;
use crate::posterior::{dot, sweep_document, supervised_conditional, EtaPosterior, MarginTerm};
use crate::predict::{infer_test_topics, TaskKind, TestInferenceConfig};
use crate::randkit::{sample_augmentation, streams, RngFactory, SamplerRng};
use crate::topic_state::{corpus_words, CountState, Hyperparams};
use crate::{Error, Result};

/// Candidate regularization constants for cross-validation.
pub const C_GRID: [f64; 5] = [1.0 / 16.0, 0.25, 1.0, 4.0, 16.0];

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionState {
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub omega: Vec<f64>,
    pub counts: CountState,
    /// Residuals `y_d − ηᵀz̄_d`; zero for empty documents.
    pub delta: Vec<f64>,
}

pub fn eps_insensitive_loss(delta: f64, epsilon: f64) -> f64 {
    (delta.abs() - epsilon).max(0.0)
}

pub fn eta_posterior_reg(
    counts: &CountState,
    lambda: &[f64],
    omega: &[f64],
    scores: &[f64],
    hyper: &Hyperparams,
) -> Result<EtaPosterior> {
    let mut post = EtaPosterior::prior(counts.num_topics(), hyper.nu2);
    for d in 0..counts.num_docs() {
        if counts.doc_len(d) == 0 {
            continue;
        }
        let zbar = counts.zbar(d)?;
        post.accumulate(&zbar, MarginTerm::epsilon_insensitive(scores[d], lambda[d], omega[d], hyper));
    }
    Ok(post)
}

pub fn draw_eta_reg<R: Rng + ?Sized>(
    rng: &mut R,
    counts: &CountState,
    lambda: &[f64],
    omega: &[f64],
    scores: &[f64],
    hyper: &Hyperparams,
) -> Result<Vec<f64>> {
    Ok(eta_posterior_reg(counts, lambda, omega, scores, hyper)?.sample(rng)?.as_slice().to_vec())
}

/// Unnormalized conditional of token `(d, n)`, already removed from `counts`.
#[allow(clippy::too_many_arguments)]
pub fn token_conditional_reg(
    counts: &CountState,
    eta: &[f64],
    lambda_d: f64,
    omega_d: f64,
    y_d: f64,
    hyper: &Hyperparams,
    d: usize,
    n: usize,
) -> Vec<f64> {
    let term = MarginTerm::epsilon_insensitive(y_d, lambda_d, omega_d, hyper);
    supervised_conditional(counts, hyper, d, n, &[eta.to_vec()], &[term])
}

/// λ_d with λ_d⁻¹ ~ IG(1/(c|Δ_d − ε|), 1).
pub fn draw_lambda_reg<R: Rng + ?Sized>(rng: &mut R, delta: f64, c: f64, epsilon: f64) -> Result<f64> {
    sample_augmentation(rng, delta - epsilon, c)
}

/// ω_d with ω_d⁻¹ ~ IG(1/(c|Δ_d + ε|), 1).
pub fn draw_omega_reg<R: Rng + ?Sized>(rng: &mut R, delta: f64, c: f64, epsilon: f64) -> Result<f64> {
    sample_augmentation(rng, delta + epsilon, c)
}

/// A weight draw paired with the z̄ of every document.
pub type RegressionSample = crate::binary::PosteriorSample;

/// Monte-Carlo `Σ_d E[max(0, |Δ_d| − ε)]`, formed as the sum of the two
/// one-sided hinges so it compares exactly with [`eps_loss_of_mean_residual`].
pub fn expected_eps_loss(samples: &[RegressionSample], scores: &[f64], epsilon: f64) -> f64 {
    let s = samples.len() as f64;
    (0..scores.len())
        .map(|d| {
            let (mut upper, mut lower) = (0.0, 0.0);
            for sample in samples {
                if let Some(z) = &sample.zbars[d] {
                    let delta = scores[d] - dot(&sample.eta, z);
                    upper += (delta - epsilon).max(0.0);
                    lower += (-delta - epsilon).max(0.0);
                }
            }
            upper / s + lower / s
        })
        .sum()
}

/// `Σ_d max(0, |mean_s Δ_d| − ε)`.
pub fn eps_loss_of_mean_residual(samples: &[RegressionSample], scores: &[f64], epsilon: f64) -> f64 {
    let s = samples.len() as f64;
    (0..scores.len())
        .map(|d| {
            let (mut upper, mut lower) = (0.0, 0.0);
            for sample in samples {
                if let Some(z) = &sample.zbars[d] {
                    let delta = scores[d] - dot(&sample.eta, z);
                    upper += delta - epsilon;
                    lower += -delta - epsilon;
                }
            }
            (upper / s).max(0.0) + (lower / s).max(0.0)
        })
        .sum()
}

#[derive(Debug, Clone)]
pub struct RegressionSampler {
    hyper: Hyperparams,
    scores: Vec<f64>,
    state: RegressionState,
    eta_rng: SamplerRng,
    sweep_rng: SamplerRng,
    lambda_rng: SamplerRng,
    omega_rng: SamplerRng,
    weights: Vec<f64>,
}

impl RegressionSampler {
    pub fn new(factory: &RngFactory, words: Vec<Vec<usize>>, vocab_size: usize, scores: &[f64], hyper: Hyperparams) -> Result<Self> {
        hyper.validate()?;
        if scores.len() != words.len() {
            return Err(Error::Dimension(format!("{} responses for {} documents", scores.len(), words.len())));
        }
        if let Some(bad) = scores.iter().find(|y| !y.is_finite()) {
            return Err(Error::Response(format!("non-finite response {bad}")));
        }
        let counts = CountState::init_random(&mut factory.stream(streams::INIT), words, hyper.k, vocab_size)?;
        let d = counts.num_docs();
        let delta = (0..d).map(|i| if counts.doc_len(i) == 0 { 0.0 } else { scores[i] }).collect();
        Ok(Self {
            hyper,
            scores: scores.to_vec(),
            state: RegressionState { eta: vec![0.0; hyper.k], lambda: vec![1.0; d], omega: vec![1.0; d], counts, delta },
            eta_rng: factory.stream(streams::eta(0)),
            sweep_rng: factory.stream(streams::SWEEP),
            lambda_rng: factory.stream(streams::lambda(0)),
            omega_rng: factory.stream(streams::omega(0)),
            weights: vec![0.0; hyper.k],
        })
    }

    pub fn state(&self) -> &RegressionState {
        &self.state
    }

    /// Draw η, then for each document sweep its tokens and draw (λ_d, ω_d).
    pub fn step(&mut self) -> Result<()> {
        let hyper = self.hyper;
        let st = &mut self.state;
        st.eta = draw_eta_reg(&mut self.eta_rng, &st.counts, &st.lambda, &st.omega, &self.scores, &hyper)?;
        let etas = [st.eta.clone()];
        for d in 0..st.counts.num_docs() {
            if st.counts.doc_len(d) == 0 {
                continue;
            }
            let term = MarginTerm::epsilon_insensitive(self.scores[d], st.lambda[d], st.omega[d], &hyper);
            sweep_document(&mut self.sweep_rng, &mut st.counts, &hyper, d, &etas, &[term], &mut self.weights)?;
            st.delta[d] = self.scores[d] - dot(&st.eta, &st.counts.zbar(d)?);
            if hyper.c > 0.0 {
                st.lambda[d] = draw_lambda_reg(&mut self.lambda_rng, st.delta[d], hyper.c, hyper.epsilon)?;
                st.omega[d] = draw_omega_reg(&mut self.omega_rng, st.delta[d], hyper.c, hyper.epsilon)?;
            }
        }
        Ok(())
    }

    /// Training R² of the current (η, z̄), or NaN when undefined.
    pub fn train_r2(&self) -> f64 {
        let (mut pred, mut truth) = (Vec::new(), Vec::new());
        for d in 0..self.state.counts.num_docs() {
            if let Ok(z) = self.state.counts.zbar(d) {
                pred.push(dot(&self.state.eta, &z));
                truth.push(self.scores[d]);
            }
        }
        predictive_r2(&pred, &truth).unwrap_or(f64::NAN)
    }

    pub fn posterior_sample(&self) -> RegressionSample {
        RegressionSample::from_counts(self.state.eta.clone(), &self.state.counts)
    }

    pub fn finalize(mut self, samples: usize) -> Result<RegressionState> {
        let st = &mut self.state;
        let post = eta_posterior_reg(&st.counts, &st.lambda, &st.omega, &self.scores, &self.hyper)?;
        let mut eta = vec![0.0; self.hyper.k];
        for _ in 0..samples {
            for (e, v) in eta.iter_mut().zip(post.sample(&mut self.eta_rng)?.iter()) {
                *e += v;
            }
        }
        for e in &mut eta {
            *e /= samples as f64;
        }
        for d in 0..st.counts.num_docs() {
            if let Ok(z) = st.counts.zbar(d) {
                st.delta[d] = self.scores[d] - dot(&eta, &z);
            }
        }
        st.eta = eta;
        Ok(self.state)
    }
}

pub fn train_regression_with(
    factory: &RngFactory,
    words: Vec<Vec<usize>>,
    vocab_size: usize,
    scores: &[f64],
    config: &TrainConfig,
) -> Result<TrainOutput<RegressionState>> {
    config.validate()?;
    let mut sampler = RegressionSampler::new(factory, words, vocab_size, scores, config.hyper)?;
    let mut log = Vec::with_capacity(config.burn_in);
    for iteration in 1..=config.burn_in {
        let start = Instant::now();
        sampler.step()?;
        let seconds = start.elapsed().as_secs_f64();
        log.push(IterationRecord { iteration, seconds, train_accuracy: sampler.train_r2() });
    }
    let state = sampler.finalize(config.eta_samples)?;
    let snapshot = snapshot_of(TaskKind::Regression, config, &state.counts, vec![state.eta.clone()]);
    Ok(TrainOutput { state, snapshot, log })
}

/// Trains on a corpus with real responses. The log's accuracy column holds
/// the training R².
pub fn train_regression(corpus: &LabeledCorpus, config: &TrainConfig) -> Result<TrainOutput<RegressionState>> {
    let scores = corpus.real_responses()?;
    train_regression_with(&RngFactory::new(config.seed), corpus_words(corpus), corpus.vocab_size(), &scores, config)
}

pub fn collect_regression_samples(corpus: &LabeledCorpus, config: &TrainConfig, n: usize) -> Result<Vec<RegressionSample>> {
    config.validate()?;
    let scores = corpus.real_responses()?;
    let factory = RngFactory::new(config.seed);
    let mut sampler = RegressionSampler::new(&factory, corpus_words(corpus), corpus.vocab_size(), &scores, config.hyper)?;
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

/// Picks the `c` from `grid` with the best mean held-out R² over `folds`
/// contiguous folds (after a seeded shuffle). Returns `(c, mean R²)` per
/// candidate and the winner's index.
pub fn cross_validate_c(
    corpus: &LabeledCorpus,
    config: &TrainConfig,
    grid: &[f64],
    folds: usize,
    test_config: &TestInferenceConfig,
) -> Result<(Vec<(f64, f64)>, usize)> {
    let d = corpus.num_docs();
    if folds < 2 || folds > d || grid.is_empty() {
        return Err(Error::InvalidParameter(format!("cross-validation needs 2 <= folds <= {d} and a non-empty grid")));
    }
    let mut order: Vec<usize> = (0..d).collect();
    {
        use rand::seq::SliceRandom;
        order.shuffle(&mut RngFactory::new(config.seed).stream(streams::INIT));
    }
    let mut results = Vec::with_capacity(grid.len());
    for &c in grid {
        let cfg = TrainConfig { hyper: Hyperparams { c, ..config.hyper }, ..*config };
        let mut total = 0.0;
        for f in 0..folds {
            let (lo, hi) = (f * d / folds, (f + 1) * d / folds);
            let mut test_idx: Vec<usize> = order[lo..hi].to_vec();
            let mut train_idx: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
            test_idx.sort_unstable();
            train_idx.sort_unstable();
            let train = corpus.subset(&train_idx);
            let test = corpus.subset(&test_idx);
            let out = train_regression(&train, &cfg)?;
            let factory = RngFactory::new(cfg.seed).child(f as u64);
            let mut pred = Vec::with_capacity(test.num_docs());
            for (i, doc) in test.docs.iter().enumerate() {
                let z = infer_test_topics(&mut factory.stream(i as u64), &out.snapshot.phi_hat, &doc.tokens, &cfg.hyper, test_config)?;
                pred.push(dot(&out.snapshot.etas[0], &z));
            }
            total += predictive_r2(&pred, &test.real_responses()?).unwrap_or(f64::NEG_INFINITY);
        }
        results.push((c, total / folds as f64));
    }
    let best = (0..results.len()).fold(0, |b, i| if results[i].1 > results[b].1 { i } else { b });
    Ok((results, best))
}
