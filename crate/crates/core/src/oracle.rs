//! Slow reference computations for testing the samplers on tiny problems:
//! the exact collapsed joint, brute-force token conditionals, quadrature of
//! the scale-mixture integrals and a dense weight posterior.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::topic_state::Hyperparams;
use crate::{Error, Result};

pub const MAX_DOCS: usize = 5;
pub const MAX_TOPICS: usize = 4;
pub const MAX_VOCAB: usize = 10;
pub const MAX_DOC_LEN: usize = 6;
pub const MAX_TASKS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Supervision {
    Unsupervised,
    /// Row `i` of each matrix belongs to task `i`: `etas` is L x K, `lambdas`
    /// and `labels` are L x D.
    Hinge { etas: Vec<Vec<f64>>, lambdas: Vec<Vec<f64>>, labels: Vec<Vec<f64>> },
    Regression { eta: Vec<f64>, lambda: Vec<f64>, omega: Vec<f64>, scores: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyInstance {
    pub words: Vec<Vec<usize>>,
    pub vocab_size: usize,
    pub hyper: Hyperparams,
    pub supervision: Supervision,
}

impl TinyInstance {
    pub fn new(words: Vec<Vec<usize>>, vocab_size: usize, hyper: Hyperparams, supervision: Supervision) -> Result<Self> {
        let too_big = |what: &str| Err(Error::InvalidParameter(format!("tiny instance exceeds the {what} cap")));
        if words.len() > MAX_DOCS {
            return too_big("document");
        }
        if hyper.k > MAX_TOPICS || hyper.k == 0 {
            return too_big("topic");
        }
        if vocab_size > MAX_VOCAB {
            return too_big("vocabulary");
        }
        if words.iter().any(|d| d.len() > MAX_DOC_LEN) {
            return too_big("document length");
        }
        if words.iter().flatten().any(|&w| w >= vocab_size) {
            return Err(Error::InvalidParameter("term outside the vocabulary".into()));
        }
        let d = words.len();
        match &supervision {
            Supervision::Unsupervised => {}
            Supervision::Hinge { etas, lambdas, labels } => {
                if etas.len() > MAX_TASKS || etas.is_empty() {
                    return too_big("task");
                }
                if lambdas.len() != etas.len() || labels.len() != etas.len() {
                    return Err(Error::Dimension("task rows disagree".into()));
                }
                if etas.iter().any(|e| e.len() != hyper.k) || lambdas.iter().chain(labels).any(|r| r.len() != d) {
                    return Err(Error::Dimension("supervision shapes disagree with the corpus".into()));
                }
            }
            Supervision::Regression { eta, lambda, omega, scores } => {
                if eta.len() != hyper.k || lambda.len() != d || omega.len() != d || scores.len() != d {
                    return Err(Error::Dimension("supervision shapes disagree with the corpus".into()));
                }
            }
        }
        Ok(Self { words, vocab_size, hyper, supervision })
    }

    pub fn num_topics(&self) -> usize {
        self.hyper.k
    }

    /// Random corpus shape including empty and single-token documents.
    fn random_shape<R: Rng + ?Sized>(rng: &mut R) -> (Vec<Vec<usize>>, usize, Hyperparams) {
        let d = rng.random_range(1..=MAX_DOCS);
        let k = rng.random_range(1..=MAX_TOPICS);
        let v = rng.random_range(2..=MAX_VOCAB);
        let words = (0..d)
            .map(|_| {
                let n = rng.random_range(0..=MAX_DOC_LEN);
                (0..n).map(|_| rng.random_range(0..v)).collect()
            })
            .collect();
        let hyper = Hyperparams {
            k,
            alpha: rng.random_range(0.2..3.0),
            beta: rng.random_range(0.01..1.0),
            nu2: rng.random_range(0.5..2.0),
            c: [0.5, 1.0, 2.0][rng.random_range(0..3)],
            ell: rng.random_range(1.0..4.0),
            epsilon: rng.random_range(0.0..0.5),
        };
        (words, v, hyper)
    }

    pub fn random_unsupervised<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let (words, v, hyper) = Self::random_shape(rng);
        Self { words, vocab_size: v, hyper, supervision: Supervision::Unsupervised }
    }

    pub fn random_hinge<R: Rng + ?Sized>(rng: &mut R, num_tasks: usize) -> Self {
        let (words, v, hyper) = Self::random_shape(rng);
        let d = words.len();
        let l = num_tasks.clamp(1, MAX_TASKS);
        let etas = (0..l).map(|_| (0..hyper.k).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect()).collect();
        let lambdas = (0..l).map(|_| (0..d).map(|_| rng.random_range(0.2..3.0)).collect()).collect();
        let labels = (0..l).map(|_| (0..d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()).collect();
        Self { words, vocab_size: v, hyper, supervision: Supervision::Hinge { etas, lambdas, labels } }
    }

    pub fn random_regression<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let (words, v, hyper) = Self::random_shape(rng);
        let d = words.len();
        let eta = (0..hyper.k).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let lambda = (0..d).map(|_| rng.random_range(0.2..3.0)).collect();
        let omega = (0..d).map(|_| rng.random_range(0.2..3.0)).collect();
        let scores = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Self { words, vocab_size: v, hyper, supervision: Supervision::Regression { eta, lambda, omega, scores } }
    }

    pub fn random_assignments<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<usize>> {
        self.words.iter().map(|d| d.iter().map(|_| rng.random_range(0..self.hyper.k)).collect()).collect()
    }
}

fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

fn zbar_of(z: &[usize], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k];
    for &t in z {
        out[t] += 1.0;
    }
    let n = z.len() as f64;
    out.iter_mut().for_each(|v| *v /= n);
    out
}

/// `log p(η)` under `N(0, ν² I)`.
fn log_gaussian_prior(eta: &[f64], nu2: f64) -> f64 {
    let k = eta.len() as f64;
    -0.5 * k * (2.0 * std::f64::consts::PI * nu2).ln() - eta.iter().map(|e| e * e).sum::<f64>() / (2.0 * nu2)
}

/// `log[(2πλ)^(−1/2) exp(−(λ + cζ)²/(2λ))]`.
fn log_augmented_factor(lambda: f64, c: f64, zeta: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * lambda).ln() - (lambda + c * zeta).powi(2) / (2.0 * lambda)
}

/// Log of the unnormalized collapsed joint of assignments `z`, evaluated
/// from scratch: Dirichlet–multinomial terms for documents and topics, the
/// Gaussian prior of the weights and every augmented likelihood factor.
/// Empty documents carry no likelihood factor.
pub fn joint_log_density(inst: &TinyInstance, z: &[Vec<usize>]) -> f64 {
    let h = &inst.hyper;
    let (k, v) = (h.k, inst.vocab_size);
    let alpha_k = h.alpha / k as f64;
    let mut total = 0.0;

    let mut topic_term = vec![vec![0usize; v]; k];
    for (doc, zd) in inst.words.iter().zip(z) {
        let mut counts = vec![0usize; k];
        for (&w, &t) in doc.iter().zip(zd) {
            counts[t] += 1;
            topic_term[t][w] += 1;
        }
        total += counts.iter().map(|&c| ln_gamma(c as f64 + alpha_k)).sum::<f64>() - ln_gamma(doc.len() as f64 + alpha_k * k as f64);
        total -= k as f64 * ln_gamma(alpha_k) - ln_gamma(alpha_k * k as f64);
    }
    for row in &topic_term {
        let n: usize = row.iter().sum();
        total += row.iter().map(|&c| ln_gamma(c as f64 + h.beta)).sum::<f64>() - ln_gamma(n as f64 + h.beta * v as f64);
        total -= v as f64 * ln_gamma(h.beta) - ln_gamma(h.beta * v as f64);
    }

    match &inst.supervision {
        Supervision::Unsupervised => {}
        Supervision::Hinge { etas, lambdas, labels } => {
            for i in 0..etas.len() {
                total += log_gaussian_prior(&etas[i], h.nu2);
                for (d, zd) in z.iter().enumerate() {
                    if zd.is_empty() {
                        continue;
                    }
                    let f: f64 = etas[i].iter().zip(zbar_of(zd, k)).map(|(e, m)| e * m).sum();
                    let zeta = h.ell - labels[i][d] * f;
                    total += log_augmented_factor(lambdas[i][d], h.c, zeta);
                }
            }
        }
        Supervision::Regression { eta, lambda, omega, scores } => {
            total += log_gaussian_prior(eta, h.nu2);
            for (d, zd) in z.iter().enumerate() {
                if zd.is_empty() {
                    continue;
                }
                let f: f64 = eta.iter().zip(zbar_of(zd, k)).map(|(e, m)| e * m).sum();
                let residual = scores[d] - f;
                total += log_augmented_factor(lambda[d], h.c, residual - h.epsilon);
                total += log_augmented_factor(omega[d], h.c, -residual - h.epsilon);
            }
        }
    }
    total
}

/// Normalized conditional of token `(d, n)` obtained by evaluating the joint
/// at every topic for that token. The entry `z[d][n]` is ignored.
pub fn brute_force_token_conditional(inst: &TinyInstance, z: &[Vec<usize>], d: usize, n: usize) -> Vec<f64> {
    let mut z = z.to_vec();
    let logs: Vec<f64> = (0..inst.hyper.k)
        .map(|t| {
            z[d][n] = t;
            joint_log_density(inst, &z)
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, eps, 40)
}

/// `∫₀^∞ (2πλ)^(−1/2) exp(−(λ + cζ)²/(2λ)) dλ` by adaptive quadrature.
///
/// With `λ = u²` the integrand becomes `√(2/π)·exp(−(u² + cζ)²/(2u²))`,
/// which is smooth on `[0, ∞)`. The range is split at the mode `√|cζ|` and
/// the upper limit doubled until the tail is negligible.
pub fn quadrature_scale_mixture(zeta: f64, c: f64) -> f64 {
    let s = c * zeta;
    let g = move |u: f64| {
        if u == 0.0 {
            return if s == 0.0 { 1.0 } else { 0.0 };
        }
        (-(u * u + s).powi(2) / (2.0 * u * u)).exp()
    };
    let mode = s.abs().sqrt();
    let peak = g(mode).max(g(1.0)).max(f64::MIN_POSITIVE);
    let eps = 1e-15 * peak;
    let mut upper = 2.0 * mode.max(1.0);
    // the tail beyond U is below ∫_U^∞ exp(−u²/2 − s) du ≤ exp(−U²/2 − s)/U
    while (-upper * upper / 2.0 - s).exp() / upper > 1e-13 * peak {
        upper *= 2.0;
    }
    let body = if mode > 0.0 && mode < upper {
        adaptive_simpson(&g, 0.0, mode, eps) + adaptive_simpson(&g, mode, upper, eps)
    } else {
        adaptive_simpson(&g, 0.0, upper, eps)
    };
    (2.0 / std::f64::consts::PI).sqrt() * body
}

/// Product of the two one-sided integrals for residual `delta`:
/// one for `Δ − ε` and one for `−Δ − ε`.
pub fn quadrature_dual_scale_mixture(delta: f64, epsilon: f64, c: f64) -> f64 {
    quadrature_scale_mixture(delta - epsilon, c) * quadrature_scale_mixture(-delta - epsilon, c)
}

/// Weight posterior `(mean, covariance)` per task, built by explicit dense
/// sums over documents and a general matrix inverse.
pub fn dense_eta_posterior_reference(inst: &TinyInstance, z: &[Vec<usize>]) -> Result<Vec<(DVector<f64>, DMatrix<f64>)>> {
    let h = &inst.hyper;
    let k = h.k;
    let zbars: Vec<Option<DVector<f64>>> =
        z.iter().map(|zd| if zd.is_empty() { None } else { Some(DVector::from_vec(zbar_of(zd, k))) }).collect();
    let solve = |precision: DMatrix<f64>, rhs: DVector<f64>| -> Result<(DVector<f64>, DMatrix<f64>)> {
        let cov = precision.try_inverse().ok_or_else(|| Error::Dimension("singular precision".into()))?;
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok((&cov * rhs, cov))
    };
    let c = h.c;
    match &inst.supervision {
        Supervision::Unsupervised => Ok(vec![solve(DMatrix::identity(k, k) / h.nu2, DVector::zeros(k))?]),
        Supervision::Hinge { etas, lambdas, labels } => (0..etas.len())
            .map(|i| {
                let mut precision = DMatrix::identity(k, k) / h.nu2;
                let mut rhs = DVector::zeros(k);
                for (d, zb) in zbars.iter().enumerate() {
                    if let Some(zb) = zb {
                        let lam = lambdas[i][d];
                        precision += zb * zb.transpose() * (c * c / lam);
                        rhs += zb * (c * labels[i][d] * (lam + c * h.ell) / lam);
                    }
                }
                solve(precision, rhs)
            })
            .collect(),
        Supervision::Regression { lambda, omega, scores, .. } => {
            let mut precision = DMatrix::identity(k, k) / h.nu2;
            let mut rhs = DVector::zeros(k);
            for (d, zb) in zbars.iter().enumerate() {
                if let Some(zb) = zb {
                    let rho = 1.0 / lambda[d] + 1.0 / omega[d];
                    let psi = (scores[d] - h.epsilon) / lambda[d] + (scores[d] + h.epsilon) / omega[d];
                    precision += zb * zb.transpose() * (c * c * rho);
                    rhs += zb * (c * c * psi);
                }
            }
            Ok(vec![solve(precision, rhs)?])
        }
    }
}

/// The joint as a function of task `task`'s weights with everything else
/// held fixed.
pub fn joint_log_density_at_eta(inst: &TinyInstance, z: &[Vec<usize>], task: usize, eta: &[f64]) -> f64 {
    let mut inst = inst.clone();
    match &mut inst.supervision {
        Supervision::Unsupervised => {}
        Supervision::Hinge { etas, .. } => etas[task] = eta.to_vec(),
        Supervision::Regression { eta: e, .. } => *e = eta.to_vec(),
    }
    joint_log_density(&inst, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randkit::RngFactory;

    #[test]
    fn caps_are_enforced() {
        let h = Hyperparams::binary(2);
        assert!(TinyInstance::new(vec![vec![0]; 6], 2, h, Supervision::Unsupervised).is_err());
        assert!(TinyInstance::new(vec![vec![0; 7]], 2, h, Supervision::Unsupervised).is_err());
        assert!(TinyInstance::new(vec![vec![0]], 11, h, Supervision::Unsupervised).is_err());
        assert!(TinyInstance::new(vec![vec![0]], 2, Hyperparams::binary(5), Supervision::Unsupervised).is_err());
        assert!(TinyInstance::new(vec![vec![0, 1]], 2, h, Supervision::Unsupervised).is_ok());
    }

    #[test]
    fn unsupervised_conditional_matches_lda_ratios() {
        // K=2, α=1 (α_k = 1/2), β=1, V=2: doc [0, 1, 0] with z = [·, 0, 1]
        let h = Hyperparams { alpha: 1.0, beta: 1.0, ..Hyperparams::binary(2) };
        let inst = TinyInstance::new(vec![vec![0, 1, 0]], 2, h, Supervision::Unsupervised).unwrap();
        let p = brute_force_token_conditional(&inst, &[vec![0, 0, 1]], 0, 0);
        // topic 0 holds term 1 once, topic 1 holds term 0 once:
        // w0 = (0+1)(1+.5)/(1+2), w1 = (1+1)(1+.5)/(1+2)
        let (w0, w1) = (1.5 / 3.0, 3.0 / 3.0);
        assert!((p[0] - w0 / (w0 + w1)).abs() < 1e-12);
        assert!((p[1] - w1 / (w0 + w1)).abs() < 1e-12);
    }

    #[test]
    fn zero_c_removes_supervision_dependence_on_z() {
        let mut rng = RngFactory::new(5).stream(0);
        for _ in 0..50 {
            let mut inst = TinyInstance::random_hinge(&mut rng, 2);
            inst.hyper.c = 0.0;
            let mut plain = inst.clone();
            plain.supervision = Supervision::Unsupervised;
            let z1 = inst.random_assignments(&mut rng);
            let z2 = inst.random_assignments(&mut rng);
            let shift = joint_log_density(&inst, &z1) - joint_log_density(&plain, &z1);
            let shift2 = joint_log_density(&inst, &z2) - joint_log_density(&plain, &z2);
            assert!((shift - shift2).abs() < 1e-9);
        }
    }

    #[test]
    fn single_topic_density_is_finite() {
        let h = Hyperparams::binary(1);
        let inst = TinyInstance::new(vec![vec![0, 1, 1], vec![]], 3, h, Supervision::Unsupervised).unwrap();
        assert!(joint_log_density(&inst, &[vec![0, 0, 0], vec![]]).is_finite());
    }

    #[test]
    fn quadrature_examples() {
        for &c in &[0.5, 1.0, 2.0] {
            for &zeta in &[-3.0, -1.0, 0.0] {
                assert!((quadrature_scale_mixture(zeta, c) - 1.0).abs() < 1e-6);
            }
        }
        assert!((quadrature_scale_mixture(0.5, 1.0) / (-1.0f64).exp() - 1.0).abs() < 1e-6);
        assert!((quadrature_scale_mixture(3.0, 2.0) / (-12.0f64).exp() - 1.0).abs() < 1e-6);
    }

    /// The joint is quadratic in each task's weights. Central differences of
    /// a quadratic are exact up to rounding, so the gradient at 0 and the
    /// Hessian recover the linear term and the precision independently of
    /// any closed form.
    #[test]
    fn dense_reference_agrees_with_joint_curvature() {
        let mut rng = RngFactory::new(8).stream(0);
        for trial in 0..40 {
            let inst = if trial % 2 == 0 { TinyInstance::random_hinge(&mut rng, 2) } else { TinyInstance::random_regression(&mut rng) };
            let z = inst.random_assignments(&mut rng);
            let refs = dense_eta_posterior_reference(&inst, &z).unwrap();
            let k = inst.hyper.k;
            let hstep = 0.5;
            for (task, (mu, cov)) in refs.iter().enumerate() {
                let precision = cov.clone().try_inverse().unwrap();
                let f = |e: &[f64]| joint_log_density_at_eta(&inst, &z, task, e);
                let zero = vec![0.0; k];
                for a in 0..k {
                    let mut p = zero.clone();
                    let mut m = zero.clone();
                    p[a] = hstep;
                    m[a] = -hstep;
                    let grad = (f(&p) - f(&m)) / (2.0 * hstep);
                    let linear = (&precision * mu)[a];
                    assert!((grad - linear).abs() < 1e-6 * (1.0 + linear.abs()), "trial {trial}: {grad} vs {linear}");
                    for b in 0..k {
                        let mut pp = zero.clone();
                        let mut pm = zero.clone();
                        let mut mp = zero.clone();
                        let mut mm = zero.clone();
                        pp[a] += hstep;
                        pp[b] += hstep;
                        pm[a] += hstep;
                        pm[b] -= hstep;
                        mp[a] -= hstep;
                        mp[b] += hstep;
                        mm[a] -= hstep;
                        mm[b] -= hstep;
                        let hess = (f(&pp) - f(&pm) - f(&mp) + f(&mm)) / (4.0 * hstep * hstep);
                        let want = -precision[(a, b)];
                        assert!((hess - want).abs() < 1e-6 * (1.0 + want.abs()), "trial {trial}: {hess} vs {want}");
                    }
                }
            }
        }
    }
}
