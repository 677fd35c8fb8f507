//! Point-estimated topics, test-time topic inference and the latent
//! prediction rules.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::corpus::Document;
use crate::posterior::dot;
use crate::randkit::{sample_categorical, RngFactory};
use crate::topic_state::{CountState, Hyperparams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    Binary,
    Multiclass,
    Multilabel,
    Regression,
}

impl TaskKind {
    pub fn code(self) -> u32 {
        match self {
            TaskKind::Binary => 0,
            TaskKind::Multiclass => 1,
            TaskKind::Multilabel => 2,
            TaskKind::Regression => 3,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => TaskKind::Binary,
            1 => TaskKind::Multiclass,
            2 => TaskKind::Multilabel,
            3 => TaskKind::Regression,
            _ => return None,
        })
    }
}

/// Everything needed to predict: `Φ̂` (K x V, rows sum to one) and the
/// sampled weights, one row per task.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSnapshot {
    pub task_kind: TaskKind,
    pub hyper: Hyperparams,
    pub seed: u64,
    pub burn_in: usize,
    pub phi_hat: DMatrix<f64>,
    pub etas: Vec<Vec<f64>>,
}

impl ModelSnapshot {
    pub fn num_topics(&self) -> usize {
        self.phi_hat.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi_hat.ncols()
    }

    pub fn num_tasks(&self) -> usize {
        self.etas.len()
    }

    pub fn discriminants(&self, zbar: &[f64]) -> Vec<f64> {
        self.etas.iter().map(|eta| dot(eta, zbar)).collect()
    }
}

/// Posterior-mean topics `φ̂_kt = (C_k^t + β) / (Σ_t C_k^t + Vβ)`.
pub fn estimate_phi_hat(counts: &CountState, beta: f64) -> DMatrix<f64> {
    let (k, v) = (counts.num_topics(), counts.vocab_size());
    let beta_sum = beta * v as f64;
    DMatrix::from_fn(k, v, |topic, t| {
        (f64::from(counts.topic_term(topic, t)) + beta) / (f64::from(counts.topic_total(topic)) + beta_sum)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestInferenceConfig {
    pub max_iterations: usize,
    /// Burn-in stops once the relative change of the document log-likelihood
    /// between sweeps drops below this.
    pub likelihood_rel_tol: f64,
    /// Number of consecutive z̄ samples averaged after burn-in.
    pub n_samples: usize,
}

impl Default for TestInferenceConfig {
    fn default() -> Self {
        Self { max_iterations: 100, likelihood_rel_tol: 1e-4, n_samples: 1 }
    }
}

impl TestInferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.n_samples == 0 {
            return Err(Error::InvalidParameter("test inference needs max_iterations >= 1 and n_samples >= 1".into()));
        }
        Ok(())
    }
}

/// Unnormalized test-time conditional `φ̂_{k,w}·(C_¬n^k + α_k)`.
pub fn test_token_conditional(phi_hat: &DMatrix<f64>, doc_counts_excluded: &[u32], word: usize, alpha_k: f64) -> Vec<f64> {
    let col = phi_hat.column(word);
    doc_counts_excluded
        .iter()
        .zip(col.iter())
        .map(|(&c, &phi)| phi * (f64::from(c) + alpha_k))
        .collect()
}

fn doc_log_likelihood(phi_hat: &DMatrix<f64>, tokens: &[usize], counts: &[u32], alpha_k: f64) -> f64 {
    let k = counts.len();
    let denom = tokens.len() as f64 + k as f64 * alpha_k;
    let theta: Vec<f64> = counts.iter().map(|&c| (f64::from(c) + alpha_k) / denom).collect();
    tokens
        .iter()
        .map(|&w| phi_hat.column(w).iter().zip(&theta).map(|(p, t)| p * t).sum::<f64>().ln())
        .sum()
}

/// Gibbs-samples topic assignments of one unseen document under fixed `Φ̂`
/// and returns the average z̄ over `n_samples` consecutive sweeps. An empty
/// document yields the uniform vector.
pub fn infer_test_topics<R: Rng + ?Sized>(
    rng: &mut R,
    phi_hat: &DMatrix<f64>,
    tokens: &[usize],
    hyper: &Hyperparams,
    config: &TestInferenceConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    let k = phi_hat.nrows();
    if let Some(&bad) = tokens.iter().find(|&&w| w >= phi_hat.ncols()) {
        return Err(Error::TermOutOfRange { index: bad, vocab: phi_hat.ncols() });
    }
    if tokens.is_empty() {
        return Ok(vec![1.0 / k as f64; k]);
    }
    let alpha_k = hyper.alpha / k as f64;
    let n = tokens.len() as f64;
    let mut z: Vec<usize> = tokens.iter().map(|_| rng.random_range(0..k)).collect();
    let mut counts = vec![0u32; k];
    for &t in &z {
        counts[t] += 1;
    }
    let mut weights = vec![0.0; k];
    let mut sweep = |z: &mut [usize], counts: &mut [u32], rng: &mut R| -> Result<()> {
        for (n, &w) in tokens.iter().enumerate() {
            counts[z[n]] -= 1;
            let col = phi_hat.column(w);
            for topic in 0..k {
                weights[topic] = col[topic] * (f64::from(counts[topic]) + alpha_k);
            }
            let new = sample_categorical(rng, &weights)?;
            z[n] = new;
            counts[new] += 1;
        }
        Ok(())
    };

    let mut prev = doc_log_likelihood(phi_hat, tokens, &counts, alpha_k);
    for _ in 0..config.max_iterations {
        sweep(&mut z, &mut counts, rng)?;
        let ll = doc_log_likelihood(phi_hat, tokens, &counts, alpha_k);
        let rel = ((ll - prev) / prev).abs();
        prev = ll;
        if rel < config.likelihood_rel_tol {
            break;
        }
    }

    let mut acc: Vec<f64> = counts.iter().map(|&c| f64::from(c) / n).collect();
    for _ in 1..config.n_samples {
        sweep(&mut z, &mut counts, rng)?;
        for (a, &c) in acc.iter_mut().zip(counts.iter()) {
            *a += f64::from(c) / n;
        }
    }
    let s = config.n_samples as f64;
    Ok(acc.into_iter().map(|a| a / s).collect())
}

pub fn discriminant(eta: &[f64], zbar: &[f64]) -> Result<f64> {
    if eta.len() != zbar.len() {
        return Err(Error::Dimension(format!("weights have length {} but z̄ has length {}", eta.len(), zbar.len())));
    }
    Ok(dot(eta, zbar))
}

/// Sign of the discriminant, with 0 mapped to +1.
pub fn predict_binary(discriminant: f64) -> i8 {
    if discriminant >= 0.0 { 1 } else { -1 }
}

/// Index of the largest discriminant; ties go to the lowest index.
pub fn predict_multiclass(discriminants: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in discriminants.iter().enumerate() {
        if v > discriminants[best] {
            best = i;
        }
    }
    best
}

/// Tasks with a strictly positive discriminant.
pub fn predict_multilabel(discriminants: &[f64]) -> Vec<usize> {
    discriminants.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i).collect()
}

pub fn predict_regression(discriminant: f64) -> f64 {
    discriminant
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Binary(i8),
    Class(usize),
    Labels(Vec<usize>),
    Real(f64),
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prediction::Binary(y) if *y > 0 => write!(f, "+1"),
            Prediction::Binary(_) => write!(f, "-1"),
            Prediction::Class(c) => write!(f, "{c}"),
            Prediction::Labels(ls) if ls.is_empty() => write!(f, "-"),
            Prediction::Labels(ls) => {
                let parts: Vec<String> = ls.iter().map(|l| l.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
            Prediction::Real(v) => write!(f, "{v:.12e}"),
        }
    }
}

/// Predicts every document. A single snapshot uses one shared z̄ per
/// document; several snapshots form a one-vs-all ensemble where each member
/// infers its own z̄ and the class with the largest discriminant wins.
///
/// Document `i` draws from stream `i` of `factory` (member `j` of an
/// ensemble uses `factory.child(j)`), so results do not depend on the
/// number of threads.
pub fn predict_documents(
    snapshots: &[ModelSnapshot],
    docs: &[Document],
    config: &TestInferenceConfig,
    factory: &RngFactory,
) -> Result<Vec<Prediction>> {
    let first = snapshots.first().ok_or_else(|| Error::Snapshot("no model to predict with".into()))?;
    config.validate()?;
    docs.par_iter()
        .enumerate()
        .map(|(i, doc)| {
            if snapshots.len() == 1 {
                let zbar = infer_test_topics(&mut factory.stream(i as u64), &first.phi_hat, &doc.tokens, &first.hyper, config)?;
                let disc = first.discriminants(&zbar);
                Ok(match first.task_kind {
                    TaskKind::Binary => Prediction::Binary(predict_binary(disc[0])),
                    TaskKind::Regression => Prediction::Real(predict_regression(disc[0])),
                    TaskKind::Multiclass => Prediction::Class(predict_multiclass(&disc)),
                    TaskKind::Multilabel => Prediction::Labels(predict_multilabel(&disc)),
                })
            } else {
                let disc = snapshots
                    .iter()
                    .enumerate()
                    .map(|(j, s)| {
                        let mut rng = factory.child(j as u64).stream(i as u64);
                        let zbar = infer_test_topics(&mut rng, &s.phi_hat, &doc.tokens, &s.hyper, config)?;
                        Ok(dot(&s.etas[0], &zbar))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Ok(match first.task_kind {
                    TaskKind::Multilabel => Prediction::Labels(predict_multilabel(&disc)),
                    _ => Prediction::Class(predict_multiclass(&disc)),
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_hat_examples() {
        let s = CountState::from_assignments(vec![vec![0, 0]], vec![vec![0, 0]], 1, 2).unwrap();
        let phi = estimate_phi_hat(&s, 0.01);
        assert!((phi[(0, 0)] - 2.01 / 2.02).abs() < 1e-15);
        assert!((phi[(0, 1)] - 0.01 / 2.02).abs() < 1e-15);

        let empty = CountState::from_assignments(vec![vec![]], vec![vec![]], 3, 4).unwrap();
        let phi = estimate_phi_hat(&empty, 0.01);
        assert!(phi.iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn symmetric_single_token_conditional() {
        let phi = DMatrix::from_element(2, 3, 1.0 / 3.0);
        let w = test_token_conditional(&phi, &[0, 0], 1, 0.5);
        assert_eq!(w[0], w[1]);
    }

    #[test]
    fn empty_document_gets_uniform_zbar() {
        let phi = DMatrix::from_element(4, 3, 1.0 / 3.0);
        let mut rng = RngFactory::new(0).stream(0);
        let z = infer_test_topics(&mut rng, &phi, &[], &Hyperparams::binary(4), &TestInferenceConfig::default()).unwrap();
        assert_eq!(z, vec![0.25; 4]);
        assert!(infer_test_topics(&mut rng, &phi, &[3], &Hyperparams::binary(4), &TestInferenceConfig::default()).is_err());
    }

    #[test]
    fn inference_is_deterministic_and_a_distribution() {
        let phi = DMatrix::from_row_slice(2, 4, &[0.45, 0.45, 0.05, 0.05, 0.05, 0.05, 0.45, 0.45]);
        let hyper = Hyperparams::binary(2);
        let cfg = TestInferenceConfig { n_samples: 5, ..Default::default() };
        let doc = [0, 1, 0, 2, 1, 0];
        let a = infer_test_topics(&mut RngFactory::new(3).stream(9), &phi, &doc, &hyper, &cfg).unwrap();
        let b = infer_test_topics(&mut RngFactory::new(3).stream(9), &phi, &doc, &hyper, &cfg).unwrap();
        assert_eq!(a, b);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a[0] > a[1]);
    }

    #[test]
    fn decision_rules() {
        assert_eq!(discriminant(&[1.0, -1.0], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(discriminant(&[0.0, 0.0], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(discriminant(&[2.0, 0.0], &[0.75, 0.25]).unwrap(), 1.5);
        assert!(discriminant(&[1.0], &[0.5, 0.5]).is_err());

        assert_eq!(predict_binary(1.5), 1);
        assert_eq!(predict_binary(-0.2), -1);
        assert_eq!(predict_binary(0.0), 1);

        assert_eq!(predict_multiclass(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(predict_multiclass(&[0.4, 0.4, 0.4]), 0);

        assert_eq!(predict_multilabel(&[0.2, -0.1, 0.0]), vec![0]);
        assert!(predict_multilabel(&[-0.2, -0.1]).is_empty());
        assert_eq!(predict_multilabel(&[0.2, 0.1]), vec![0, 1]);
        assert_eq!(predict_regression(1.5), 1.5);
    }

    #[test]
    fn prediction_formatting() {
        assert_eq!(Prediction::Binary(-1).to_string(), "-1");
        assert_eq!(Prediction::Labels(vec![0, 3]).to_string(), "0,3");
        assert_eq!(Prediction::Labels(vec![]).to_string(), "-");
        let real = Prediction::Real(1.0 / 3.0).to_string();
        assert!(real.starts_with("3.333333333333"));
        assert!((real.parse::<f64>().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }
}
