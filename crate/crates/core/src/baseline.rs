//! Two-stage reference pipeline: unsupervised LDA topics followed by a
//! least-squares fit of the labels on z̄, predicting with the sign.

use nalgebra::{DMatrix, DVector};

use crate::binary::TrainConfig;
use crate::corpus::LabeledCorpus;
use crate::predict::{estimate_phi_hat, ModelSnapshot, TaskKind};
use crate::randkit::RngFactory;
use crate::topic_state::run_lda_baseline;
use crate::{Error, Result};

/// Minimum-norm least-squares solution of `X w ≈ y`.
pub fn least_squares(rows: &[Vec<f64>], targets: &[f64]) -> Result<Vec<f64>> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n == 0 || n != targets.len() {
        return Err(Error::Dimension(format!("{n} rows for {} targets", targets.len())));
    }
    let x = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    let y = DVector::from_column_slice(targets);
    let w = x.svd(true, true).solve(&y, 1e-12).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(w.as_slice().to_vec())
}

/// Trains LDA for `config.burn_in` sweeps and fits the weights by least
/// squares on the non-empty training documents.
pub fn train_lda_least_squares(corpus: &LabeledCorpus, config: &TrainConfig, task_kind: TaskKind) -> Result<ModelSnapshot> {
    config.validate()?;
    let targets = match task_kind {
        TaskKind::Binary => corpus.binary_labels()?,
        TaskKind::Regression => corpus.real_responses()?,
        _ => return Err(Error::InvalidParameter("the least-squares baseline handles binary and regression tasks".into())),
    };
    let counts = run_lda_baseline(&RngFactory::new(config.seed), corpus, &config.hyper, config.burn_in.max(1))?;
    let mut rows = Vec::new();
    let mut ys = Vec::new();
    for d in 0..counts.num_docs() {
        if let Ok(z) = counts.zbar(d) {
            rows.push(z);
            ys.push(targets[d]);
        }
    }
    let eta = least_squares(&rows, &ys)?;
    Ok(ModelSnapshot {
        task_kind,
        hyper: config.hyper,
        seed: config.seed,
        burn_in: config.burn_in,
        phi_hat: estimate_phi_hat(&counts, config.hyper.beta),
        etas: vec![eta],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit() {
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        let w = least_squares(&rows, &[2.0, -1.0, 0.5]).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-12 && (w[1] + 1.0).abs() < 1e-12);
    }
}
