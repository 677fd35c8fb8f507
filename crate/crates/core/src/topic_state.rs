//! Collapsed sufficient statistics for topic assignments and the plain LDA
//! token conditional.

use rand::Rng;

use crate::corpus::LabeledCorpus;
use crate::randkit::{sample_categorical, streams, RngFactory};
use crate::{Error, Result};

/// Model hyperparameters.
///
/// `alpha` is the scalar of the symmetric document prior; each topic gets
/// `alpha / k`. `beta` is the per-term topic prior weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyperparams {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Prior variance of every classifier weight.
    pub nu2: f64,
    /// Regularization constant scaling the loss.
    pub c: f64,
    /// Cost of a wrong prediction (the margin target).
    pub ell: f64,
    /// Insensitivity width of the regression loss.
    pub epsilon: f64,
}

impl Hyperparams {
    /// Binary classification defaults: α=1, β=0.01, ν²=1, c=1, ℓ=164.
    pub fn binary(k: usize) -> Self {
        Self { k, alpha: 1.0, beta: 0.01, nu2: 1.0, c: 1.0, ell: 164.0, epsilon: 1e-3 }
    }

    /// Multi-class defaults: ℓ=64, otherwise as [`Hyperparams::binary`].
    pub fn multiclass(k: usize) -> Self {
        Self { ell: 64.0, ..Self::binary(k) }
    }

    /// Regression defaults: ε=1e-3, c=1.
    pub fn regression(k: usize) -> Self {
        Self::binary(k)
    }

    pub fn alpha_k(&self) -> f64 {
        self.alpha / self.k as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.k == 0 {
            return bad("number of topics must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.nu2 > 0.0 && self.nu2.is_finite()) {
            return bad(format!("nu2 must be positive, got {}", self.nu2));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad(format!("c must be non-negative, got {}", self.c));
        }
        if !(self.ell >= 1.0 && self.ell.is_finite()) {
            return bad(format!("ell must be at least 1, got {}", self.ell));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Topic assignments and the count matrices derived from them.
///
/// Topic–term counts are stored term-major (`V x K`) so the K counts needed
/// for one token are contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountState {
    k: usize,
    v: usize,
    words: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    term_topic: Vec<u32>,
    topic_totals: Vec<u32>,
    doc_topic: Vec<u32>,
}

impl CountState {
    /// Builds counts from explicit assignments.
    pub fn from_assignments(words: Vec<Vec<usize>>, z: Vec<Vec<usize>>, k: usize, v: usize) -> Result<Self> {
        if words.len() != z.len() {
            return Err(Error::Dimension(format!("{} documents but {} assignment lists", words.len(), z.len())));
        }
        let d = words.len();
        let mut state = Self {
            k,
            v,
            term_topic: vec![0; v * k],
            topic_totals: vec![0; k],
            doc_topic: vec![0; d * k],
            words,
            z,
        };
        for doc in 0..d {
            if state.words[doc].len() != state.z[doc].len() {
                return Err(Error::Dimension(format!("document {doc}: token/assignment length mismatch")));
            }
            for n in 0..state.words[doc].len() {
                let (t, topic) = (state.words[doc][n], state.z[doc][n]);
                if t >= v {
                    return Err(Error::TermOutOfRange { index: t, vocab: v });
                }
                if topic >= k {
                    return Err(Error::InvalidParameter(format!("topic {topic} >= K = {k}")));
                }
                state.increment(doc, t, topic);
            }
        }
        Ok(state)
    }

    /// Uniform random assignment of every token.
    pub fn init_random<R: Rng + ?Sized>(rng: &mut R, words: Vec<Vec<usize>>, k: usize, v: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("number of topics must be at least 1".into()));
        }
        let z = words.iter().map(|doc| doc.iter().map(|_| rng.random_range(0..k)).collect()).collect();
        Self::from_assignments(words, z, k, v)
    }

    /// Recomputes every count from the assignments.
    pub fn rebuild(&self) -> Self {
        Self::from_assignments(self.words.clone(), self.z.clone(), self.k, self.v).expect("state holds valid assignments")
    }

    #[inline]
    fn increment(&mut self, d: usize, t: usize, topic: usize) {
        self.term_topic[t * self.k + topic] += 1;
        self.topic_totals[topic] += 1;
        self.doc_topic[d * self.k + topic] += 1;
    }

    pub fn num_topics(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.v
    }

    pub fn num_docs(&self) -> usize {
        self.words.len()
    }

    pub fn doc_len(&self, d: usize) -> usize {
        self.words[d].len()
    }

    pub fn total_tokens(&self) -> usize {
        self.words.iter().map(Vec::len).sum()
    }

    pub fn words(&self, d: usize) -> &[usize] {
        &self.words[d]
    }

    pub fn assignments(&self, d: usize) -> &[usize] {
        &self.z[d]
    }

    pub fn all_assignments(&self) -> &[Vec<usize>] {
        &self.z
    }

    /// `C_k^t`.
    pub fn topic_term(&self, k: usize, t: usize) -> u32 {
        self.term_topic[t * self.k + k]
    }

    /// Counts of term `t` in every topic.
    pub fn term_row(&self, t: usize) -> &[u32] {
        &self.term_topic[t * self.k..(t + 1) * self.k]
    }

    /// `sum_t C_k^t`.
    pub fn topic_total(&self, k: usize) -> u32 {
        self.topic_totals[k]
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.topic_totals
    }

    /// `C_d^k` for every k.
    pub fn doc_topic_row(&self, d: usize) -> &[u32] {
        &self.doc_topic[d * self.k..(d + 1) * self.k]
    }

    /// Removes token `(d, n)` from the counts and returns its topic. The
    /// assignment itself is kept until [`CountState::add_token`].
    pub fn remove_token(&mut self, d: usize, n: usize) -> Result<usize> {
        let (t, topic) = (self.words[d][n], self.z[d][n]);
        let k = self.k;
        let tt = &mut self.term_topic[t * k + topic];
        if *tt == 0 {
            return Err(Error::CountUnderflow { what: "topic-term count" });
        }
        *tt -= 1;
        let dt = &mut self.doc_topic[d * k + topic];
        if *dt == 0 {
            self.term_topic[t * k + topic] += 1;
            return Err(Error::CountUnderflow { what: "document-topic count" });
        }
        *dt -= 1;
        self.topic_totals[topic] -= 1;
        Ok(topic)
    }

    pub fn add_token(&mut self, d: usize, n: usize, topic: usize) {
        debug_assert!(topic < self.k);
        let t = self.words[d][n];
        self.z[d][n] = topic;
        self.increment(d, t, topic);
    }

    /// Unnormalized collapsed-LDA weights for token `(d, n)` assuming it is
    /// currently excluded from the counts.
    pub fn lda_weights_into(&self, hyper: &Hyperparams, d: usize, n: usize, out: &mut [f64]) {
        let t = self.words[d][n];
        let beta_sum = hyper.beta * self.v as f64;
        let alpha_k = hyper.alpha_k();
        let term = self.term_row(t);
        let doc = self.doc_topic_row(d);
        for k in 0..self.k {
            out[k] = (f64::from(term[k]) + hyper.beta) * (f64::from(doc[k]) + alpha_k)
                / (f64::from(self.topic_totals[k]) + beta_sum);
        }
    }

    /// Empirical topic proportions `C_d^k / N_d`.
    pub fn zbar(&self, d: usize) -> Result<Vec<f64>> {
        let n = self.doc_len(d);
        if n == 0 {
            return Err(Error::InvalidParameter(format!("document {d} is empty; its topic proportions are undefined")));
        }
        Ok(self.doc_topic_row(d).iter().map(|&c| f64::from(c) / n as f64).collect())
    }
}

pub fn corpus_words(corpus: &LabeledCorpus) -> Vec<Vec<usize>> {
    corpus.docs.iter().map(|d| d.tokens.clone()).collect()
}

/// Uniform random topic for every token of the corpus.
pub fn init_assignments<R: Rng + ?Sized>(rng: &mut R, corpus: &LabeledCorpus, k: usize) -> Result<CountState> {
    CountState::init_random(rng, corpus_words(corpus), k, corpus.vocab_size())
}

pub fn lda_token_conditional(state: &CountState, hyper: &Hyperparams, d: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; state.num_topics()];
    state.lda_weights_into(hyper, d, n, &mut out);
    out
}

pub fn zbar(state: &CountState, d: usize) -> Result<Vec<f64>> {
    state.zbar(d)
}

/// One sweep of unsupervised collapsed Gibbs sampling over every token.
pub fn lda_sweep<R: Rng + ?Sized>(rng: &mut R, state: &mut CountState, hyper: &Hyperparams) -> Result<()> {
    let mut weights = vec![0.0; state.num_topics()];
    for d in 0..state.num_docs() {
        for n in 0..state.doc_len(d) {
            state.remove_token(d, n)?;
            state.lda_weights_into(hyper, d, n, &mut weights);
            let k = sample_categorical(rng, &weights)?;
            state.add_token(d, n, k);
        }
    }
    Ok(())
}

/// Unsupervised collapsed-Gibbs LDA run for `iterations` sweeps.
pub fn run_lda_baseline(factory: &RngFactory, corpus: &LabeledCorpus, hyper: &Hyperparams, iterations: usize) -> Result<CountState> {
    hyper.validate()?;
    if iterations == 0 {
        return Err(Error::InvalidParameter("LDA baseline needs at least one sweep".into()));
    }
    let mut state = init_assignments(&mut factory.stream(streams::INIT), corpus, hyper.k)?;
    let mut rng = factory.stream(streams::SWEEP);
    for _ in 0..iterations {
        lda_sweep(&mut rng, &mut state, hyper)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_svmlight, LabelKind};

    fn toy() -> LabeledCorpus {
        parse_svmlight("+1 0:2 1:1 3:2\n-1 1:3 2:1\n+1\n-1 4:1\n", LabelKind::Binary, Some(5)).unwrap()
    }

    fn check_invariants(s: &CountState) {
        let mut total = 0;
        for d in 0..s.num_docs() {
            let row: u32 = s.doc_topic_row(d).iter().sum();
            assert_eq!(row as usize, s.doc_len(d));
            total += s.doc_len(d);
        }
        assert_eq!(s.topic_totals().iter().sum::<u32>() as usize, total);
        for k in 0..s.num_topics() {
            let col: u32 = (0..s.vocab_size()).map(|t| s.topic_term(k, t)).sum();
            assert_eq!(col, s.topic_total(k));
        }
        assert_eq!(&s.rebuild(), s);
    }

    #[test]
    fn init_conserves_tokens_and_is_deterministic() {
        let c = toy();
        let f = RngFactory::new(5);
        let s = init_assignments(&mut f.stream(0), &c, 3).unwrap();
        check_invariants(&s);
        assert_eq!(s.total_tokens(), c.total_tokens());
        let s2 = init_assignments(&mut f.stream(0), &c, 3).unwrap();
        assert_eq!(s, s2);

        let one = init_assignments(&mut f.stream(0), &c, 1).unwrap();
        for d in 0..c.num_docs() {
            assert!(one.assignments(d).iter().all(|&k| k == 0));
            assert_eq!(one.doc_topic_row(d)[0] as usize, c.docs[d].len());
        }
    }

    #[test]
    fn remove_add_roundtrip() {
        let c = toy();
        let mut s = init_assignments(&mut RngFactory::new(1).stream(0), &c, 3).unwrap();
        let before = s.clone();
        let k = s.remove_token(0, 2).unwrap();
        s.add_token(0, 2, k);
        assert_eq!(s, before);

        let single = CountState::from_assignments(vec![vec![4]], vec![vec![1]], 2, 5).unwrap();
        let mut single = single;
        assert_eq!(single.remove_token(0, 0).unwrap(), 1);
        assert_eq!(single.doc_topic_row(0), &[0, 0]);
        assert!(matches!(single.remove_token(0, 0), Err(Error::CountUnderflow { .. })));
        assert_eq!(single.doc_topic_row(0), &[0, 0]);
        assert_eq!(single.topic_term(1, 4), 0);
    }

    #[test]
    fn lda_conditional_examples() {
        let hyper = Hyperparams { k: 2, ..Hyperparams::binary(2) };
        let mut s = CountState::from_assignments(vec![vec![0]], vec![vec![0]], 2, 3).unwrap();
        s.remove_token(0, 0).unwrap();
        let w = lda_token_conditional(&s, &hyper, 0, 0);
        assert_eq!(w[0], w[1]);

        // document counts (3, 1) with equal topic-term counts and totals
        let words = vec![vec![0, 1, 1, 1, 1], vec![0, 0, 2, 2]];
        let z = vec![vec![0, 0, 0, 0, 1], vec![0, 1, 1, 1]];
        let mut s = CountState::from_assignments(words, z, 2, 3).unwrap();
        s.remove_token(0, 0).unwrap();
        assert_eq!(s.doc_topic_row(0), &[3, 1]);
        assert_eq!(s.topic_term(0, 0), s.topic_term(1, 0));
        assert_eq!(s.topic_total(0), s.topic_total(1));
        let w = lda_token_conditional(&s, &hyper, 0, 0);
        let a = hyper.alpha_k();
        assert!((w[0] / w[1] - (3.0 + a) / (1.0 + a)).abs() < 1e-12);
    }

    #[test]
    fn zbar_examples() {
        let s = CountState::from_assignments(vec![vec![0, 1, 2, 3], vec![0, 0], vec![]], vec![vec![0, 1, 0, 1], vec![0, 0], vec![]], 3, 4).unwrap();
        assert_eq!(s.zbar(0).unwrap(), vec![0.5, 0.5, 0.0]);
        assert_eq!(s.zbar(1).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(s.zbar(2).is_err());
    }

    #[test]
    fn baseline_sweeps_keep_counts_consistent() {
        let c = toy();
        let hyper = Hyperparams::binary(3);
        let s = run_lda_baseline(&RngFactory::new(2), &c, &hyper, 5).unwrap();
        check_invariants(&s);
        assert!(run_lda_baseline(&RngFactory::new(2), &c, &hyper, 0).is_err());

        let one = parse_svmlight("+1 0:1\n", LabelKind::Binary, None).unwrap();
        let s = run_lda_baseline(&RngFactory::new(2), &one, &Hyperparams::binary(4), 1).unwrap();
        assert_eq!(s.total_tokens(), 1);
        check_invariants(&s);
    }

    #[test]
    fn hyperparams_validation() {
        assert!(Hyperparams::binary(5).validate().is_ok());
        assert!(Hyperparams { k: 0, ..Hyperparams::binary(5) }.validate().is_err());
        assert!(Hyperparams { ell: 0.5, ..Hyperparams::binary(5) }.validate().is_err());
        assert!(Hyperparams { c: -1.0, ..Hyperparams::binary(5) }.validate().is_err());
        assert!(Hyperparams { nu2: 0.0, ..Hyperparams::binary(5) }.validate().is_err());
        assert!(Hyperparams { c: 0.0, ..Hyperparams::binary(5) }.validate().is_ok());
    }
}
