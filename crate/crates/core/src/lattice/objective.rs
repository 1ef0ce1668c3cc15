//! Auxiliary objectives and their combination: per-channel masking MSE, the
//! sum of per-channel transducer losses, and the weighted total.

use serde::{Deserialize, Serialize};

use super::rnnt::rnnt_loss_value;
use super::types::{LogitsTensor, Matrix};
use super::LatticeError;

pub const DEFAULT_LAMBDA_CTC: f64 = 0.2;
pub const DEFAULT_LAMBDA_MASK: f64 = 0.2;

/// Masking loss output: per-channel mean squared error summed over channels,
/// and the gradient per channel (2 * (estimate - target) / numel).
#[derive(Debug, Clone)]
pub struct MaskOutput {
    pub loss: f64,
    pub grad: Vec<Matrix>,
}

/// Sum over channels of the per-channel elementwise MSE. Channel counts and
/// per-channel shapes must agree.
pub fn mask_loss(estimates: &[Matrix], targets: &[Matrix]) -> Result<MaskOutput, LatticeError> {
    if estimates.len() != targets.len() {
        return Err(LatticeError::ShapeMismatch {
            what: "mask channels",
            expected: targets.len(),
            got: estimates.len(),
        });
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(estimates.len());
    for (est, tgt) in estimates.iter().zip(targets) {
        if est.rows() != tgt.rows() || est.cols() != tgt.cols() {
            return Err(LatticeError::ShapeMismatch {
                what: "mask channel shape",
                expected: tgt.rows() * tgt.cols(),
                got: est.rows() * est.cols(),
            });
        }
        let numel = est.rows() * est.cols();
        let mut g = Matrix::zeros(est.rows(), est.cols());
        let mut sq_sum = 0.0;
        for ((g_v, &e), &t) in g.data_mut().iter_mut().zip(est.data()).zip(tgt.data()) {
            let diff = e - t;
            sq_sum += diff * diff;
            *g_v = 2.0 * diff / numel as f64;
        }
        loss += sq_sum / numel as f64;
        grad.push(g);
    }
    Ok(MaskOutput { loss, grad })
}

/// Sum of per-channel transducer losses over the channel-interleaved
/// references. Channels with empty labels contribute their blank-only loss.
pub fn heat_loss(per_channel: &[(LogitsTensor, Vec<usize>)]) -> Result<f64, LatticeError> {
    let mut total = 0.0;
    for (logits, labels) in per_channel {
        total += rnnt_loss_value(logits, labels)?;
    }
    Ok(total)
}

/// Weighted total objective. Defaults for both weights are 0.2.
pub fn total_loss(heat: f64, ctc: f64, mask: f64, lambda_ctc: f64, lambda_mask: f64) -> f64 {
    heat + lambda_ctc * ctc + lambda_mask * mask
}

/// Reduction over a batch of loss values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

/// Reduces a batch of losses; an empty batch reduces to 0.
pub fn reduce(losses: &[f64], reduction: Reduction) -> f64 {
    let sum: f64 = losses.iter().sum();
    match reduction {
        Reduction::Sum => sum,
        Reduction::Mean => {
            if losses.is_empty() {
                0.0
            } else {
                sum / losses.len() as f64
            }
        }
    }
}
