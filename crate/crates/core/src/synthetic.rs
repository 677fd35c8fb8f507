//! Planted-topic corpora for benchmarks and end-to-end tests.
//!
//! Every generator uses block topics: topic `k` puts `block_mass` of its
//! probability uniformly on its own block of terms and spreads the rest over
//! the whole vocabulary.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};

use crate::corpus::{Document, LabeledCorpus, Response, VocabMap};
use crate::randkit::{sample_categorical, RngFactory, SamplerRng};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTopics {
    pub topics: Vec<Vec<f64>>,
}

impl BlockTopics {
    pub fn new(num_topics: usize, vocab_size: usize, block_mass: f64) -> Self {
        let block = vocab_size / num_topics;
        let floor = (1.0 - block_mass) / vocab_size as f64;
        let topics = (0..num_topics)
            .map(|k| {
                let mut row = vec![floor; vocab_size];
                for t in k * block..(k + 1) * block {
                    row[t] += block_mass / block as f64;
                }
                row
            })
            .collect();
        Self { topics }
    }

    pub fn vocab_size(&self) -> usize {
        self.topics[0].len()
    }

    /// Draws `len` tokens from the mixture `weights` over topics. Returns the
    /// tokens and the empirical proportions of the topics actually used.
    pub fn sample_document<R: Rng + ?Sized>(&self, rng: &mut R, weights: &[f64], len: usize) -> Result<(Vec<usize>, Vec<f64>)> {
        let mut tokens = Vec::with_capacity(len);
        let mut used = vec![0.0; weights.len()];
        for _ in 0..len {
            let k = sample_categorical(rng, weights)?;
            used[k] += 1.0;
            tokens.push(sample_categorical(rng, &self.topics[k])?);
        }
        if len > 0 {
            used.iter_mut().for_each(|u| *u /= len as f64);
        }
        Ok((tokens, used))
    }
}

fn doc_length<R: Rng + ?Sized>(rng: &mut R, mean: usize) -> usize {
    let spread = mean / 6;
    rng.random_range(mean - spread..=mean + spread)
}

fn corpus(vocab: usize, docs: Vec<Vec<usize>>, responses: Vec<Response>) -> Result<LabeledCorpus> {
    let docs = docs.into_iter().enumerate().map(|(i, t)| Document::new(i, t)).collect();
    LabeledCorpus::new(VocabMap::anonymous(vocab), docs, responses)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryBenchmarkConfig {
    pub vocab_size: usize,
    pub train_docs: usize,
    pub test_docs: usize,
    pub mean_doc_len: usize,
    pub block_mass: f64,
    /// Weight of the document's own topic; the rest goes to the topic of the
    /// other class that shares its style.
    pub primary_weight: f64,
}

impl Default for BinaryBenchmarkConfig {
    fn default() -> Self {
        Self { vocab_size: 200, train_docs: 400, test_docs: 200, mean_doc_len: 60, block_mass: 0.9, primary_weight: 0.75 }
    }
}

/// Two classes over four topics. Topic `2·class + style` is the document's
/// main topic; its secondary topic is the other class's topic with the same
/// style. Class 0 is labelled +1 and class 1 is labelled −1.
///
/// The style axis explains word co-occurrence better than the class axis, so
/// a two-topic unsupervised model tends to split by style.
pub fn binary_benchmark(seed: u64, cfg: &BinaryBenchmarkConfig) -> Result<(LabeledCorpus, LabeledCorpus)> {
    let topics = BlockTopics::new(4, cfg.vocab_size, cfg.block_mass);
    let mut rng = RngFactory::new(seed).stream(0);
    let make = |n: usize, rng: &mut SamplerRng| -> Result<LabeledCorpus> {
        let mut docs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let class = rng.random_range(0..2usize);
            let style = rng.random_range(0..2usize);
            let mut w = vec![0.0; 4];
            w[2 * class + style] = cfg.primary_weight;
            w[2 * (1 - class) + style] = 1.0 - cfg.primary_weight;
            let len = doc_length(rng, cfg.mean_doc_len);
            docs.push(topics.sample_document(rng, &w, len)?.0);
            labels.push(Response::Binary(if class == 0 { 1 } else { -1 }));
        }
        corpus(cfg.vocab_size, docs, labels)
    };
    let train = make(cfg.train_docs, &mut rng)?;
    let test = make(cfg.test_docs, &mut rng)?;
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionBenchmarkConfig {
    pub num_topics: usize,
    pub vocab_size: usize,
    pub train_docs: usize,
    pub test_docs: usize,
    pub mean_doc_len: usize,
    pub block_mass: f64,
    /// Symmetric Dirichlet concentration of each topic in a document.
    pub doc_concentration: f64,
    pub weights: Vec<f64>,
    pub noise_sd: f64,
}

impl Default for RegressionBenchmarkConfig {
    fn default() -> Self {
        Self {
            num_topics: 4,
            vocab_size: 200,
            train_docs: 400,
            test_docs: 200,
            mean_doc_len: 60,
            block_mass: 0.9,
            doc_concentration: 0.5,
            weights: vec![-2.0, -0.5, 0.5, 2.0],
            noise_sd: 0.1,
        }
    }
}

/// Responses `y_d = wᵀz̄_d + N(0, noise_sd²)` where z̄_d are the planted
/// topic proportions of the document's tokens.
pub fn regression_benchmark(seed: u64, cfg: &RegressionBenchmarkConfig) -> Result<(LabeledCorpus, LabeledCorpus)> {
    let topics = BlockTopics::new(cfg.num_topics, cfg.vocab_size, cfg.block_mass);
    let gamma = Gamma::new(cfg.doc_concentration, 1.0).map_err(|e| crate::Error::InvalidParameter(e.to_string()))?;
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| crate::Error::InvalidParameter(e.to_string()))?;
    let mut rng = RngFactory::new(seed).stream(0);
    let make = |n: usize, rng: &mut SamplerRng| -> Result<LabeledCorpus> {
        let mut docs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let mut theta: Vec<f64> = (0..cfg.num_topics).map(|_| gamma.sample(rng)).collect();
            let s: f64 = theta.iter().sum();
            if s > 0.0 {
                theta.iter_mut().for_each(|t| *t /= s);
            } else {
                theta = vec![1.0; cfg.num_topics];
            }
            let len = doc_length(rng, cfg.mean_doc_len);
            let (tokens, zbar) = topics.sample_document(rng, &theta, len)?;
            let y = cfg.weights.iter().zip(&zbar).map(|(w, z)| w * z).sum::<f64>() + noise.sample(rng);
            docs.push(tokens);
            ys.push(Response::Real(y));
        }
        corpus(cfg.vocab_size, docs, ys)
    };
    let train = make(cfg.train_docs, &mut rng)?;
    let test = make(cfg.test_docs, &mut rng)?;
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MulticlassBenchmarkConfig {
    pub num_classes: usize,
    pub vocab_size: usize,
    pub train_docs: usize,
    pub test_docs: usize,
    pub mean_doc_len: usize,
    pub block_mass: f64,
    /// Weight of the class topic; the rest goes to one other random topic.
    pub primary_weight: f64,
}

impl Default for MulticlassBenchmarkConfig {
    fn default() -> Self {
        Self { num_classes: 5, vocab_size: 200, train_docs: 400, test_docs: 200, mean_doc_len: 60, block_mass: 0.9, primary_weight: 0.7 }
    }
}

/// Class `i` documents draw mostly from topic `i`.
pub fn multiclass_benchmark(seed: u64, cfg: &MulticlassBenchmarkConfig) -> Result<(LabeledCorpus, LabeledCorpus)> {
    let l = cfg.num_classes;
    let topics = BlockTopics::new(l, cfg.vocab_size, cfg.block_mass);
    let mut rng = RngFactory::new(seed).stream(0);
    let make = |n: usize, rng: &mut SamplerRng| -> Result<LabeledCorpus> {
        let mut docs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let class = rng.random_range(0..l);
            let other = (class + rng.random_range(1..l)) % l;
            let mut w = vec![0.0; l];
            w[class] = cfg.primary_weight;
            w[other] += 1.0 - cfg.primary_weight;
            let len = doc_length(rng, cfg.mean_doc_len);
            docs.push(topics.sample_document(rng, &w, len)?.0);
            labels.push(Response::Class(class));
        }
        corpus(cfg.vocab_size, docs, labels)
    };
    let train = make(cfg.train_docs, &mut rng)?;
    let test = make(cfg.test_docs, &mut rng)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_topics_are_distributions() {
        let t = BlockTopics::new(4, 200, 0.9);
        for row in &t.topics {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(t.topics[0][0] > t.topics[0][60]);
    }

    #[test]
    fn benchmarks_have_requested_shape() {
        let (train, test) = binary_benchmark(1, &BinaryBenchmarkConfig::default()).unwrap();
        assert_eq!((train.num_docs(), test.num_docs()), (400, 200));
        let mean = train.total_tokens() as f64 / 400.0;
        assert!((mean - 60.0).abs() < 3.0);
        assert_eq!(binary_benchmark(1, &BinaryBenchmarkConfig::default()).unwrap().0, train);
        let (train, _) = regression_benchmark(1, &RegressionBenchmarkConfig::default()).unwrap();
        assert!(train.real_responses().is_ok());
        let (train, _) = multiclass_benchmark(1, &MulticlassBenchmarkConfig::default()).unwrap();
        assert_eq!(train.vocab_size(), 200);
    }
}
