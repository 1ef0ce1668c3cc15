//! Brute-force reference implementations and randomized instance builders
//! for the test suites. Exhaustive enumeration replaces the dynamic
//! programs at desk scale, and central finite differences replace the
//! analytic gradients, so the fast paths can be checked against slow code
//! whose correctness is obvious.

use rand::Rng;

use crate::lattice::{
    collapse_alignment, log_add, log_sum_exp, FrameLogits, LogitsTensor, Matrix,
    TrivialJoinerInput,
};

/// Central finite-difference gradient of `loss` at `params`, leaving
/// `params` unchanged on return.
pub fn finite_difference_grad<F>(params: &mut [f64], mut loss: F, step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let origin = params[i];
        params[i] = origin + step;
        let plus = loss(params);
        params[i] = origin - step;
        let minus = loss(params);
        params[i] = origin;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Maximum elementwise error between two gradients, scaled by
/// `max(1, |a|, |b|)` so that absolute error counts for small entries and
/// relative error for large ones.
pub fn max_scaled_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / 1f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}

/// Transducer loss by explicit enumeration of every monotone alignment
/// path: from node (0, 0), emit the next label or consume a frame with
/// blank, and finish with the terminal blank at (frames-1, labels). The
/// loss is the negated log-sum of all path weights.
pub fn rnnt_loss_by_enumeration(logits: &LogitsTensor, labels: &[usize]) -> f64 {
    assert_eq!(labels.len(), logits.labels(), "label count mismatch");

    fn walk(
        logits: &LogitsTensor,
        labels: &[usize],
        t: usize,
        u: usize,
        acc: f64,
        paths: &mut Vec<f64>,
    ) {
        if t == logits.frames() - 1 && u == labels.len() {
            paths.push(acc + logits.log_prob(t, u, logits.blank()));
            return;
        }
        if u < labels.len() {
            let weight = logits.log_prob(t, u, labels[u]);
            walk(logits, labels, t, u + 1, acc + weight, paths);
        }
        if t + 1 < logits.frames() {
            let weight = logits.log_prob(t, u, logits.blank());
            walk(logits, labels, t + 1, u, acc + weight, paths);
        }
    }

    let mut paths = Vec::new();
    walk(logits, labels, 0, 0, 0.0, &mut paths);
    -log_sum_exp(&paths)
}

/// CTC loss by explicit enumeration of all `vocab^frames` alignments,
/// keeping those that collapse (merge repeats, drop blanks) to `labels`.
/// Returns infinity when no alignment matches.
pub fn ctc_loss_by_enumeration(logits: &FrameLogits, labels: &[usize]) -> f64 {
    let frames = logits.frames();
    let vocab = logits.vocab();
    let mut alignment = vec![0usize; frames];
    let mut total = f64::NEG_INFINITY;
    loop {
        if collapse_alignment(&alignment, logits.blank()) == labels {
            let weight: f64 = alignment
                .iter()
                .enumerate()
                .map(|(t, &v)| logits.row(t)[v])
                .sum();
            total = log_add(total, weight);
        }
        let mut pos = 0;
        loop {
            if pos == frames {
                return -total;
            }
            alignment[pos] += 1;
            if alignment[pos] < vocab {
                break;
            }
            alignment[pos] = 0;
            pos += 1;
        }
    }
}

/// Uniformly random raw (pre-normalization) values in [-2, 2).
pub fn random_raw_values<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

/// Random normalized lattice of the given shape.
pub fn random_logits<R: Rng>(
    rng: &mut R,
    frames: usize,
    labels: usize,
    vocab: usize,
    blank: usize,
) -> LogitsTensor {
    let values = random_raw_values(rng, frames * (labels + 1) * vocab);
    LogitsTensor::from_raw(frames, labels, vocab, blank, values).expect("valid random shape")
}

/// Random label sequence avoiding `blank`.
pub fn random_labels<R: Rng>(rng: &mut R, len: usize, vocab: usize, blank: usize) -> Vec<usize> {
    assert!(vocab >= 2, "need at least one non-blank symbol");
    (0..len)
        .map(|_| {
            let v = rng.gen_range(0..vocab - 1);
            if v >= blank {
                v + 1
            } else {
                v
            }
        })
        .collect()
}

/// Random encoder/predictor pair for the additive joiner.
pub fn random_trivial_joiner<R: Rng>(
    rng: &mut R,
    frames: usize,
    labels: usize,
    vocab: usize,
    blank: usize,
) -> TrivialJoinerInput {
    let enc = Matrix::new(frames, vocab, random_raw_values(rng, frames * vocab))
        .expect("valid random shape");
    let pred = Matrix::new(labels + 1, vocab, random_raw_values(rng, (labels + 1) * vocab))
        .expect("valid random shape");
    TrivialJoinerInput::new(enc, pred, blank).expect("valid random shape")
}

/// Random normalized per-frame distribution grid.
pub fn random_frame_logits<R: Rng>(
    rng: &mut R,
    frames: usize,
    vocab: usize,
    blank: usize,
) -> FrameLogits {
    let values = random_raw_values(rng, frames * vocab);
    FrameLogits::from_raw(frames, vocab, blank, values).expect("valid random shape")
}
