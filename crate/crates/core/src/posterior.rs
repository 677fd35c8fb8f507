//! Kernels shared by every supervised trainer.
//!
//! After augmentation, each (document, task) pair contributes a factor whose
//! dependence on the discriminant `F = ηᵀz̄` is `exp(a·F − b·F²)`. For the
//! hinge loss with augmentation variable λ and label y,
//!
//! ```text
//! a = c·y·(λ + c·ℓ)/λ        b = c²/(2λ)
//! ```
//!
//! and for the epsilon-insensitive loss with (λ, ω),
//!
//! ```text
//! a = c²·ψ,  ψ = (y − ε)/λ + (y + ε)/ω        b = c²·ρ/2,  ρ = 1/λ + 1/ω
//! ```
//!
//! The weight posterior and the token conditionals are both written in terms
//! of `(a, b)`, so binary, regression and multi-task trainers share one code
//! path.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::randkit::{cholesky_with_jitter, sample_categorical, standard_normal_vector, CholeskyFactor};
use crate::topic_state::{CountState, Hyperparams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginTerm {
    pub a: f64,
    pub b: f64,
}

impl MarginTerm {
    pub const ZERO: MarginTerm = MarginTerm { a: 0.0, b: 0.0 };

    /// Hinge-loss term for label `y` in {-1, +1} and augmentation `lambda`.
    pub fn hinge(y: f64, lambda: f64, hyper: &Hyperparams) -> Self {
        let c = hyper.c;
        Self { a: c * y * (lambda + c * hyper.ell) / lambda, b: c * c / (2.0 * lambda) }
    }

    /// Epsilon-insensitive term for response `y` and augmentations `(lambda, omega)`.
    pub fn epsilon_insensitive(y: f64, lambda: f64, omega: f64, hyper: &Hyperparams) -> Self {
        let aux = AuxCoefficients::new(y, lambda, omega, hyper.epsilon);
        let c2 = hyper.c * hyper.c;
        Self { a: c2 * aux.psi, b: c2 * aux.rho / 2.0 }
    }
}

/// `ρ_d = 1/λ_d + 1/ω_d` and `ψ_d = (y_d − ε)/λ_d + (y_d + ε)/ω_d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxCoefficients {
    pub rho: f64,
    pub psi: f64,
}

impl AuxCoefficients {
    pub fn new(y: f64, lambda: f64, omega: f64, epsilon: f64) -> Self {
        Self { rho: 1.0 / lambda + 1.0 / omega, psi: (y - epsilon) / lambda + (y + epsilon) / omega }
    }
}

/// Gaussian weight posterior in information form: precision `P` and linear
/// term `r`, so the mean is `P⁻¹ r` and the covariance `P⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaPosterior {
    pub precision: DMatrix<f64>,
    pub linear: DVector<f64>,
}

impl EtaPosterior {
    /// The prior `N(0, ν² I)`.
    pub fn prior(k: usize, nu2: f64) -> Self {
        Self { precision: DMatrix::identity(k, k) / nu2, linear: DVector::zeros(k) }
    }

    /// Adds one document's contribution `2b·z̄z̄ᵀ` and `a·z̄`, keeping the
    /// precision exactly symmetric.
    pub fn accumulate(&mut self, zbar: &[f64], term: MarginTerm) {
        let k = zbar.len();
        let two_b = 2.0 * term.b;
        for j in 0..k {
            let zj = zbar[j];
            if zj == 0.0 {
                continue;
            }
            self.linear[j] += term.a * zj;
            let s = two_b * zj;
            self.precision[(j, j)] += s * zj;
            for i in 0..j {
                let v = s * zbar[i];
                self.precision[(i, j)] += v;
                self.precision[(j, i)] += v;
            }
        }
    }

    pub fn assemble<'a>(k: usize, nu2: f64, docs: impl IntoIterator<Item = (&'a [f64], MarginTerm)>) -> Self {
        let mut post = Self::prior(k, nu2);
        for (zbar, term) in docs {
            post.accumulate(zbar, term);
        }
        post
    }

    pub fn factor(&self) -> Result<CholeskyFactor> {
        cholesky_with_jitter(&self.precision)
    }

    pub fn mean(&self) -> Result<DVector<f64>> {
        let f = self.factor()?;
        Ok(solve_llt(&f.l, &self.linear))
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let f = self.factor()?;
        let k = self.linear.len();
        let mut cov = DMatrix::zeros(k, k);
        for j in 0..k {
            let mut e = DVector::zeros(k);
            e[j] = 1.0;
            cov.set_column(j, &solve_llt(&f.l, &e));
        }
        Ok(cov)
    }

    /// Draws `μ + L⁻ᵀ g` where `L Lᵀ = P`; the covariance of `L⁻ᵀ g` is `P⁻¹`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let f = self.factor()?;
        let mean = solve_llt(&f.l, &self.linear);
        let g = standard_normal_vector(rng, self.linear.len());
        let noise = f
            .l
            .transpose()
            .solve_upper_triangular(&g)
            .ok_or(Error::Cholesky(f.jitter_applied))?;
        Ok(mean + noise)
    }
}

fn solve_llt(l: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let y = l.solve_lower_triangular(rhs).expect("cholesky factor has a positive diagonal");
    l.transpose().solve_upper_triangular(&y).expect("cholesky factor has a positive diagonal")
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Supervised factor of the token conditional for one document.
///
/// For a token of document `d` with `N` tokens, choosing topic `k` gives
/// `F = γ·η_k + γ·S`, where `γ = 1/N` and `S = Σ_k' η_k' C_{d,¬n}^k'`. The
/// exponent contributed by each margin term is therefore
///
/// ```text
/// γ·a·η_k − b·(γ²·η_k² + 2γ²·η_k·S)
/// ```
///
/// up to a constant in `k`. With `Λ = S/(N − 1)` this is the familiar
/// `γ²η_k² + 2γ(1−γ)η_kΛ` form; writing it through `S` needs no special
/// case for single-token documents. The cross term is summed over tasks as
/// `Σ_i b_i η_ik S_i = Σ_k' G_kk' C_d^k'` with `G = Σ_i b_i η_i η_iᵀ`, which
/// is updated in O(K) per token.
#[derive(Debug, Clone)]
pub struct DocSupervision {
    gamma: f64,
    base: Vec<f64>,
    coupling: Vec<f64>,
    cross: Vec<f64>,
    k: usize,
}

impl DocSupervision {
    /// `doc_counts` are the document's current topic counts; the cross term
    /// is built from them as they stand.
    pub fn new(etas: &[Vec<f64>], terms: &[MarginTerm], doc_counts: &[u32], doc_len: usize) -> Self {
        let k = doc_counts.len();
        let gamma = 1.0 / doc_len as f64;
        let g2 = gamma * gamma;
        let mut base = vec![0.0; k];
        let mut coupling = vec![0.0; k * k];
        for (eta, term) in etas.iter().zip(terms) {
            for a in 0..k {
                base[a] += gamma * term.a * eta[a] - g2 * term.b * eta[a] * eta[a];
                let be = term.b * eta[a];
                for b in 0..k {
                    coupling[a * k + b] += be * eta[b];
                }
            }
        }
        let mut cross = vec![0.0; k];
        for (b, &count) in doc_counts.iter().enumerate() {
            if count > 0 {
                let cnt = f64::from(count);
                for a in 0..k {
                    cross[a] += coupling[a * k + b] * cnt;
                }
            }
        }
        Self { gamma, base, coupling, cross, k }
    }

    #[inline]
    pub fn remove(&mut self, topic: usize) {
        for a in 0..self.k {
            self.cross[a] -= self.coupling[a * self.k + topic];
        }
    }

    #[inline]
    pub fn add(&mut self, topic: usize) {
        for a in 0..self.k {
            self.cross[a] += self.coupling[a * self.k + topic];
        }
    }

    /// Log of the supervised factor for every topic, without normalization.
    pub fn exponents(&self) -> Vec<f64> {
        let two_g2 = 2.0 * self.gamma * self.gamma;
        (0..self.k).map(|a| self.base[a] - two_g2 * self.cross[a]).collect()
    }

    /// Multiplies LDA weights by the supervised factor, shifted by the largest
    /// exponent so nothing overflows.
    #[inline]
    pub fn apply(&self, weights: &mut [f64]) {
        let two_g2 = 2.0 * self.gamma * self.gamma;
        let mut max = f64::NEG_INFINITY;
        for a in 0..self.k {
            let e = self.base[a] - two_g2 * self.cross[a];
            if e > max {
                max = e;
            }
        }
        for a in 0..self.k {
            let e = self.base[a] - two_g2 * self.cross[a];
            weights[a] *= (e - max).exp();
        }
    }
}

/// Resamples every token of document `d` under the collapsed LDA conditional
/// times the supervised factor of the given `(eta, term)` pairs.
pub fn sweep_document<R: Rng + ?Sized>(
    rng: &mut R,
    counts: &mut CountState,
    hyper: &Hyperparams,
    d: usize,
    etas: &[Vec<f64>],
    terms: &[MarginTerm],
    weights: &mut [f64],
) -> Result<()> {
    let len = counts.doc_len(d);
    if len == 0 {
        return Ok(());
    }
    let mut sup = DocSupervision::new(etas, terms, counts.doc_topic_row(d), len);
    for n in 0..len {
        let old = counts.remove_token(d, n)?;
        sup.remove(old);
        counts.lda_weights_into(hyper, d, n, weights);
        sup.apply(weights);
        let new = sample_categorical(rng, weights)?;
        counts.add_token(d, n, new);
        sup.add(new);
    }
    Ok(())
}

/// Unnormalized conditional of token `(d, n)`, which must already be
/// removed from `counts`.
pub fn supervised_conditional(
    counts: &CountState,
    hyper: &Hyperparams,
    d: usize,
    n: usize,
    etas: &[Vec<f64>],
    terms: &[MarginTerm],
) -> Vec<f64> {
    let mut weights = vec![0.0; counts.num_topics()];
    counts.lda_weights_into(hyper, d, n, &mut weights);
    DocSupervision::new(etas, terms, counts.doc_topic_row(d), counts.doc_len(d)).apply(&mut weights);
    weights
}

/// Normalizes weights to probabilities.
pub fn normalize(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}
