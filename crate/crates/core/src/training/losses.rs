use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::model::PROB_EPS;
use crate::{Error, Result};

/// Rows whose norm deviates from 1 by more than this are rejected by [`infonce`].
pub const NORM_TOLERANCE: f64 = 1e-4;

/// How per-anchor InfoNCE terms are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoNceReduction {
    #[default]
    Sum,
    Mean,
}

fn check_batch(anchors: ArrayView2<f64>, positives: ArrayView2<f64>) -> Result<()> {
    if anchors.nrows() == 0 {
        return Err(Error::Config("contrastive batch must hold at least one pair".into()));
    }
    if anchors.dim() != positives.dim() {
        return Err(Error::Dimension {
            expected: anchors.len(),
            got: positives.len(),
        });
    }
    for (k, row) in anchors.rows().into_iter().chain(positives.rows()).enumerate() {
        let norm = row.dot(&row).sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized {
                row: k,
                norm,
            });
        }
    }
    Ok(())
}

/// Scaled similarities `S = A Pᵀ / τ` and the row-wise softmax of `S`.
fn similarities(anchors: ArrayView2<f64>, positives: ArrayView2<f64>, tau: f64) -> (f64, Array2<f64>) {
    let s = anchors.dot(&positives.t()) / tau;
    let mut loss = 0.0;
    let mut soft = s.clone();
    for (j, mut row) in soft.rows_mut().into_iter().enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - s[[j, j]];
        row.mapv_inplace(|v| (v - lse).exp());
    }
    (loss, soft)
}

/// `-Σ_j log( exp(a_j·p_j/τ) / Σ_j' exp(a_j·p_j'/τ) )` with in-batch negatives.
pub fn infonce(anchors: ArrayView2<f64>, positives: ArrayView2<f64>, tau: f64, reduction: InfoNceReduction) -> Result<f64> {
    Ok(infonce_grad(anchors, positives, tau, reduction)?.0)
}

/// Loss together with `dL/dA` and `dL/dP`.
pub fn infonce_grad(
    anchors: ArrayView2<f64>,
    positives: ArrayView2<f64>,
    tau: f64,
    reduction: InfoNceReduction,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    check_batch(anchors, positives)?;
    let b = anchors.nrows();
    let (mut loss, mut ds) = similarities(anchors, positives, tau);
    for j in 0..b {
        ds[[j, j]] -= 1.0;
    }
    let scale = match reduction {
        InfoNceReduction::Sum => 1.0,
        InfoNceReduction::Mean => 1.0 / b as f64,
    };
    loss *= scale;
    ds *= scale / tau;
    let da = ds.dot(&positives);
    let dp = ds.t().dot(&anchors);
    Ok((loss, da, dp))
}

/// Mean binary cross-entropy with predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn rec_loss(predictions: ArrayView1<f64>, labels: ArrayView1<f64>) -> f64 {
    assert_eq!(predictions.len(), labels.len(), "one label per prediction");
    if predictions.is_empty() {
        return 0.0;
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    total / predictions.len() as f64
}

/// `L_rec + w1·L_uu + w2·L_ii`.
pub fn total_loss(l_rec: f64, l_uu: f64, l_ii: f64, w1: f64, w2: f64) -> f64 {
    l_rec + w1 * l_uu + w2 * l_ii
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    #[test]
    fn single_pair_with_itself_is_zero() {
        let a = array![[0.6, 0.8]];
        assert!(infonce(a.view(), a.view(), 0.15, InfoNceReduction::Sum).unwrap().abs() < 1e-12);
    }

    #[test]
    fn identical_rows_give_b_log_b() {
        let a = Array2::from_elem((2, 4), 0.5);
        let l = infonce(a.view(), a.view(), 0.15, InfoNceReduction::Sum).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-9);
        assert!((l - 1.3863).abs() < 1e-4);
        let m = infonce(a.view(), a.view(), 0.15, InfoNceReduction::Mean).unwrap();
        assert!((m - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn rejects_unnormalized_and_bad_temperature() {
        let a = array![[1.0, 1.0]];
        assert!(matches!(
            infonce(a.view(), a.view(), 0.1, InfoNceReduction::Sum),
            Err(Error::NotNormalized { .. })
        ));
        let u = array![[1.0, 0.0]];
        assert!(infonce(u.view(), u.view(), 0.0, InfoNceReduction::Sum).is_err());
        assert!(infonce(Array2::zeros((0, 2)).view(), Array2::zeros((0, 2)).view(), 0.1, InfoNceReduction::Sum).is_err());
    }

    #[test]
    fn rec_loss_fixtures() {
        let half = Array1::from_elem(5, 0.5);
        let labels = array![1.0, 0.0, 1.0, 1.0, 0.0];
        assert!((rec_loss(half.view(), labels.view()) - 2f64.ln()).abs() < 1e-12);
        let l = rec_loss(array![0.9, 0.2].view(), array![1.0, 0.0].view());
        assert!((l - (-(0.9f64.ln() + 0.8f64.ln()) / 2.0)).abs() < 1e-12);
        assert!((l - 0.1643).abs() < 1e-4);
        assert!(rec_loss(labels.view(), labels.view()) < 1e-6);
    }

    #[test]
    fn total_loss_is_weighted_sum() {
        assert!((total_loss(0.5, 1.0, 2.0, 0.1, 0.2) - 1.0).abs() < 1e-15);
        assert_eq!(total_loss(0.7, 3.0, 4.0, 0.0, 0.0), 0.7);
    }
}
