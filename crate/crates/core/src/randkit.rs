//! Seeded random variates: categorical, inverse Gaussian, GIG(1/2, 1, b) and
//! multivariate Gaussian draws.
//!
//! All randomness flows from [`RngFactory`], a ChaCha8 key derived from a
//! 64-bit seed. A factory hands out numbered streams (`ChaCha8Rng` stream
//! ids) and child factories (new keys mixed with SplitMix64), so every
//! parallel unit of work gets its own reproducible generator regardless of
//! how many threads run it.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

pub type SamplerRng = ChaCha8Rng;

/// Stream ids used by the trainers.
///
/// Topic initialisation and the token sweep each own one stream. Every task
/// `i` owns three more for its weight draw and its augmentation draws, so a
/// task's randomness never depends on how many other tasks exist.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const SWEEP: u64 = 1;

    pub fn eta(task: usize) -> u64 {
        16 + 4 * task as u64
    }

    pub fn lambda(task: usize) -> u64 {
        17 + 4 * task as u64
    }

    pub fn omega(task: usize) -> u64 {
        18 + 4 * task as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngFactory {
    key: [u64; 4],
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngFactory {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        Self { key: [splitmix64(&mut s), splitmix64(&mut s), splitmix64(&mut s), splitmix64(&mut s)] }
    }

    /// Independent factory for sub-unit `index` (a one-vs-all task, a run, ...).
    pub fn child(&self, index: u64) -> Self {
        let mut s = self.key.iter().fold(index ^ 0x6a09_e667_f3bc_c908, |acc, &k| {
            let mut t = acc ^ k;
            splitmix64(&mut t)
        });
        Self { key: [splitmix64(&mut s), splitmix64(&mut s), splitmix64(&mut s), splitmix64(&mut s)] }
    }

    pub fn stream(&self, id: u64) -> SamplerRng {
        let mut seed = [0u8; 32];
        for (chunk, word) in seed.chunks_exact_mut(8).zip(self.key) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(id);
        rng
    }
}

/// Draws `k` with probability `weights[k] / sum(weights)`.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> Result<usize> {
    let mut total = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidParameter(format!("categorical weight {w} is not a finite non-negative number")));
        }
        total += w;
    }
    if total.is_nan() || total <= 0.0 || total.is_infinite() {
        return Err(Error::InvalidParameter("categorical weights sum to zero".into()));
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = k;
            if u < acc {
                return Ok(k);
            }
        }
    }
    // u landed in the rounding gap at the top of the range
    Ok(last_positive)
}

/// Inverse Gaussian IG(mean, shape) by the transformation method with
/// multiple roots (Michael, Schucany and Haas).
pub fn sample_inverse_gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, shape: f64) -> Result<f64> {
    if !(mean > 0.0 && mean.is_finite() && shape > 0.0 && shape.is_finite()) {
        return Err(Error::InvalidParameter(format!("inverse Gaussian needs positive finite parameters, got ({mean}, {shape})")));
    }
    let v: f64 = rng.sample(StandardNormal);
    let y = mean * v * v;
    // smaller root of the quadratic; written as 4·b·y/(s+y)² to avoid the
    // cancellation in y - s when y is large
    let x = if y == 0.0 {
        mean
    } else {
        let s = (y * y + 4.0 * shape * y).sqrt();
        let r = mean * (4.0 * shape * y / (s + y)) / (s + y);
        if r > 0.0 { r } else { f64::MIN_POSITIVE }
    };
    let u: f64 = rng.random();
    if u <= mean / (mean + x) {
        Ok(x)
    } else {
        Ok(mean * (mean / x))
    }
}

/// GIG(1/2, 1, b), drawn as the reciprocal of IG(1/sqrt(b), 1).
pub fn sample_gig_half<R: Rng + ?Sized>(rng: &mut R, b: f64) -> Result<f64> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::InvalidParameter(format!("GIG(1/2, 1, b) needs b > 0, got {b}")));
    }
    Ok(1.0 / sample_inverse_gaussian(rng, 1.0 / b.sqrt(), 1.0)?)
}

pub const IG_MARGIN_FLOOR: f64 = 1e-8;
pub const IG_MEAN_CAP: f64 = 1e8;

/// Mean `1 / (c·|margin|)` of the reciprocal augmentation variable, with the
/// margin floored and the mean capped so it stays finite as the margin → 0.
pub fn clamped_ig_mean(margin: f64, c: f64) -> f64 {
    (1.0 / (c * margin.abs().max(IG_MARGIN_FLOOR))).min(IG_MEAN_CAP)
}

/// Draws an augmentation variable λ with λ⁻¹ ~ IG(1/(c|margin|), 1).
pub fn sample_augmentation<R: Rng + ?Sized>(rng: &mut R, margin: f64, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("augmentation draw needs c > 0, got {c}")));
    }
    if !margin.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite margin {margin}")));
    }
    Ok(1.0 / sample_inverse_gaussian(rng, clamped_ig_mean(margin, c), 1.0)?)
}

#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    /// Lower triangular `L` with `L Lᵀ = A + jitter·I`.
    pub l: DMatrix<f64>,
    pub jitter_applied: f64,
}

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_CAP: f64 = 1e-4;

/// Cholesky factorisation, adding `jitter·I` for jitter in
/// `0, 1e-10, 1e-9, …, 1e-4` until every pivot is strictly positive.
pub fn cholesky_with_jitter(a: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("cholesky of a {}x{} matrix", n, a.ncols())));
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::InvalidParameter("cholesky input is not symmetric".into()));
            }
        }
    }
    let mut jitter = 0.0;
    loop {
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = Cholesky::new(m) {
            let l = ch.unpack();
            if l.diagonal().iter().all(|&d| d > 0.0 && d.is_finite()) {
                return Ok(CholeskyFactor { l, jitter_applied: jitter });
            }
        }
        jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
        if jitter > JITTER_CAP * 1.000_001 {
            return Err(Error::Cholesky(JITTER_CAP));
        }
    }
}

pub fn standard_normal_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draws `mu + L g` with `L Lᵀ = sigma` and `g` standard normal.
pub fn sample_mvn<R: Rng + ?Sized>(rng: &mut R, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    let k = mu.len();
    if sigma.nrows() != k || sigma.ncols() != k {
        return Err(Error::Dimension(format!("mean has length {k} but covariance is {}x{}", sigma.nrows(), sigma.ncols())));
    }
    if sigma.iter().all(|&v| v == 0.0) {
        return Ok(mu.clone());
    }
    let factor = cholesky_with_jitter(sigma)?;
    let g = standard_normal_vector(rng, k);
    Ok(mu + factor.l * g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let f = RngFactory::new(42);
        let a: Vec<u64> = (0..4).map(|_| f.stream(3).random()).collect();
        let mut r1 = f.stream(3);
        let mut r2 = f.stream(3);
        let mut r3 = f.stream(4);
        let x: Vec<u64> = (0..8).map(|_| r1.random()).collect();
        let y: Vec<u64> = (0..8).map(|_| r2.random()).collect();
        let z: Vec<u64> = (0..8).map(|_| r3.random()).collect();
        assert_eq!(x, y);
        assert_ne!(x, z);
        assert_eq!(a.len(), 4);
        assert_ne!(f.child(0).stream(0).random::<u64>(), f.child(1).stream(0).random::<u64>());
        assert_ne!(RngFactory::new(1), RngFactory::new(2));
    }

    #[test]
    fn categorical_degenerate_cases() {
        let mut rng = RngFactory::new(1).stream(0);
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&mut rng, &[0.0, 5.0]).unwrap(), 1);
        }
        assert!(sample_categorical(&mut rng, &[0.0, 0.0]).is_err());
        assert!(sample_categorical(&mut rng, &[1.0, f64::NAN]).is_err());
        assert!(sample_categorical(&mut rng, &[1.0, f64::INFINITY]).is_err());
        assert!(sample_categorical(&mut rng, &[]).is_err());
    }

    #[test]
    fn inverse_gaussian_rejects_bad_parameters() {
        let mut rng = RngFactory::new(1).stream(0);
        assert!(sample_inverse_gaussian(&mut rng, 0.0, 1.0).is_err());
        assert!(sample_inverse_gaussian(&mut rng, 1.0, -1.0).is_err());
        assert!(sample_inverse_gaussian(&mut rng, f64::INFINITY, 1.0).is_err());
        assert!(sample_gig_half(&mut rng, 0.0).is_err());
        assert!(sample_augmentation(&mut rng, 1.0, 0.0).is_err());
    }

    #[test]
    fn inverse_gaussian_extreme_means_stay_positive() {
        let mut rng = RngFactory::new(9).stream(0);
        for &mean in &[1e-8, 1e-3, 1.0, 1e4, IG_MEAN_CAP] {
            for _ in 0..10_000 {
                let x = sample_inverse_gaussian(&mut rng, mean, 1.0).unwrap();
                assert!(x > 0.0 && x.is_finite(), "mean {mean} gave {x}");
            }
        }
    }

    #[test]
    fn clamp_rule() {
        assert_eq!(clamped_ig_mean(2.0, 1.0), 0.5);
        assert_eq!(clamped_ig_mean(-1.0, 2.0), 0.5);
        assert_eq!(clamped_ig_mean(0.0, 1.0), IG_MEAN_CAP);
        let mut rng = RngFactory::new(3).stream(0);
        let lam = sample_augmentation(&mut rng, 0.0, 1.0).unwrap();
        assert!(lam > 0.0 && lam.is_finite());
    }

    #[test]
    fn cholesky_examples() {
        let f = cholesky_with_jitter(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(f.l, DMatrix::identity(3, 3));
        assert_eq!(f.jitter_applied, 0.0);

        let f = cholesky_with_jitter(&dmatrix![4.0, 2.0; 2.0, 3.0]).unwrap();
        let expected = dmatrix![2.0, 0.0; 1.0, 2f64.sqrt()];
        assert!((f.l - expected).norm() < 1e-14);

        assert!(cholesky_with_jitter(&dmatrix![1.0, 0.0; 0.0, -1.0]).is_err());
        assert!(cholesky_with_jitter(&dmatrix![1.0, 0.5; 0.0, 1.0]).is_err());
    }

    #[test]
    fn cholesky_repairs_tiny_negative_eigenvalue() {
        let (s, c) = (0.3f64.sin(), 0.3f64.cos());
        let q = dmatrix![c, -s; s, c];
        let a = &q * dmatrix![1.0, 0.0; 0.0, -1e-12] * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let f = cholesky_with_jitter(&a).unwrap();
        assert!(f.jitter_applied > 0.0 && f.jitter_applied <= 1e-9, "{}", f.jitter_applied);
        let mut target = a.clone();
        for i in 0..2 {
            target[(i, i)] += f.jitter_applied;
        }
        let rel = (&f.l * f.l.transpose() - &target).norm() / target.norm();
        assert!(rel < 1e-8);
    }

    #[test]
    fn mvn_zero_covariance_returns_mean() {
        let mut rng = RngFactory::new(1).stream(0);
        let mu = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(sample_mvn(&mut rng, &mu, &DMatrix::zeros(2, 2)).unwrap(), mu);
        assert!(sample_mvn(&mut rng, &mu, &DMatrix::zeros(3, 3)).is_err());
    }
}
