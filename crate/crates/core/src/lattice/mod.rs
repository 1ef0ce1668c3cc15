//! Exact dynamic-programming loss kernels with analytic gradients: full-sum
//! transducer loss, window-pruned transducer loss with a trivial
//! (add-and-normalize) joiner, CTC, per-channel masking MSE, and the combined
//! training objective. All recursions run in log space; gradients are taken
//! with respect to pre-softmax logits, with raw inputs normalized internally.

mod ctc;
mod objective;
mod pruned;
mod rnnt;
mod types;

pub use ctc::{collapse_alignment, ctc_loss, CtcOutput, FrameLogits};
pub use objective::{
    heat_loss, mask_loss, reduce, total_loss, MaskOutput, Reduction, DEFAULT_LAMBDA_CTC,
    DEFAULT_LAMBDA_MASK,
};
pub use pruned::{prune_bounds, pruned_rnnt_loss, PruneBounds, PrunedOutput, WindowLogits};
pub use rnnt::{occupancy, occupancy_from_trivial, rnnt_loss, OccupancyGrid, RnntOutput};
pub use types::{trivial_join, LogitsTensor, Matrix, TrivialJoinerInput};

#[derive(Debug, thiserror::Error)]
pub enum LatticeError {
    #[error("{what}: expected {expected} values, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} contains a non-finite value")]
    NonFinite { what: &'static str },
    #[error("blank id {blank} out of vocabulary of size {vocab}")]
    InvalidBlank { blank: usize, vocab: usize },
    #[error("label at position {position} is {label}, vocabulary size {vocab}, blank {blank}")]
    InvalidLabel {
        position: usize,
        label: usize,
        vocab: usize,
        blank: usize,
    },
    #[error("expected {expected} labels, got {got}")]
    LabelCountMismatch { expected: usize, got: usize },
    #[error("log-probabilities not normalized at frame {frame}, slot {slot}: logsumexp = {log_sum}")]
    NotNormalized {
        frame: usize,
        slot: usize,
        log_sum: f64,
    },
    #[error("window size must be at least 1")]
    InvalidWindow,
    #[error("window {window} cannot connect {labels} labels over {frames} frames (needs labels <= frames * (window - 1))")]
    WindowTooSmall {
        window: usize,
        frames: usize,
        labels: usize,
    },
    #[error("invalid prune bounds: {reason}")]
    InvalidBounds { reason: String },
    #[error("frame count must be at least 1")]
    NoFrames,
}

/// log(exp(a) + exp(b)) without overflow; -inf is the additive identity.
pub(crate) fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    let sum: f64 = row.iter().map(|&v| (v - hi).exp()).sum();
    hi + sum.ln()
}

/// In-place log-softmax over one vocabulary row.
pub(crate) fn log_softmax(row: &mut [f64]) {
    let norm = log_sum_exp(row);
    for v in row.iter_mut() {
        *v -= norm;
    }
}

pub(crate) fn validate_labels(
    labels: &[usize],
    vocab: usize,
    blank: usize,
) -> Result<(), LatticeError> {
    for (position, &label) in labels.iter().enumerate() {
        if label >= vocab || label == blank {
            return Err(LatticeError::InvalidLabel {
                position,
                label,
                vocab,
                blank,
            });
        }
    }
    Ok(())
}
