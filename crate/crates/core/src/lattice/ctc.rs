//! CTC loss: marginal probability of all T-length alignments that collapse
//! (remove consecutive repeats, then drop blanks) to the label sequence,
//! via forward-backward over the blank-interleaved extended sequence.

use super::{log_add, log_softmax, log_sum_exp, validate_labels, LatticeError};

/// Per-frame vocabulary log-probabilities (T x V), normalized per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLogits {
    frames: usize,
    vocab: usize,
    blank: usize,
    log_probs: Vec<f64>,
}

impl FrameLogits {
    pub fn from_raw(
        frames: usize,
        vocab: usize,
        blank: usize,
        mut values: Vec<f64>,
    ) -> Result<Self, LatticeError> {
        Self::check_shape(frames, vocab, blank, &values)?;
        for row in values.chunks_mut(vocab) {
            log_softmax(row);
        }
        Ok(FrameLogits {
            frames,
            vocab,
            blank,
            log_probs: values,
        })
    }

    pub fn from_normalized(
        frames: usize,
        vocab: usize,
        blank: usize,
        values: Vec<f64>,
    ) -> Result<Self, LatticeError> {
        Self::check_shape(frames, vocab, blank, &values)?;
        for (t, row) in values.chunks(vocab).enumerate() {
            let log_sum = log_sum_exp(row);
            if log_sum.abs() > 1e-8 {
                return Err(LatticeError::NotNormalized {
                    frame: t,
                    slot: 0,
                    log_sum,
                });
            }
        }
        Ok(FrameLogits {
            frames,
            vocab,
            blank,
            log_probs: values,
        })
    }

    fn check_shape(
        frames: usize,
        vocab: usize,
        blank: usize,
        values: &[f64],
    ) -> Result<(), LatticeError> {
        if frames == 0 {
            return Err(LatticeError::NoFrames);
        }
        if blank >= vocab {
            return Err(LatticeError::InvalidBlank { blank, vocab });
        }
        if values.len() != frames * vocab {
            return Err(LatticeError::ShapeMismatch {
                what: "frame logits",
                expected: frames * vocab,
                got: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(LatticeError::NonFinite {
                what: "frame logits",
            });
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.log_probs[t * self.vocab..(t + 1) * self.vocab]
    }
}

/// Loss, gradient w.r.t. pre-softmax logits (T x V row-major), and a
/// feasibility flag: when T is shorter than the minimal alignment length the
/// loss is +inf, the gradient is zero, and `feasible` is false.
#[derive(Debug, Clone)]
pub struct CtcOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub feasible: bool,
}

/// Collapses an alignment: consecutive repeats merge, then blanks drop.
pub fn collapse_alignment(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Minimal alignment length: every label needs a frame, plus a separating
/// blank between equal consecutive labels.
fn min_frames(labels: &[usize]) -> usize {
    labels.len() + labels.windows(2).filter(|w| w[0] == w[1]).count()
}

pub fn ctc_loss(logits: &FrameLogits, labels: &[usize]) -> Result<CtcOutput, LatticeError> {
    validate_labels(labels, logits.vocab(), logits.blank())?;
    let t_len = logits.frames();
    let vocab = logits.vocab();
    let blank = logits.blank();
    if t_len < min_frames(labels) {
        return Ok(CtcOutput {
            loss: f64::INFINITY,
            grad: vec![0.0; t_len * vocab],
            feasible: false,
        });
    }

    // Extended sequence: blank, y1, blank, y2, ..., yU, blank.
    let m = 2 * labels.len() + 1;
    let ext = |s: usize| if s % 2 == 0 { blank } else { labels[s / 2] };
    let can_skip = |s: usize| s >= 2 && s % 2 == 1 && ext(s) != ext(s - 2);

    let neg = f64::NEG_INFINITY;
    let mut alpha = vec![neg; t_len * m];
    alpha[0] = logits.row(0)[blank];
    if m > 1 {
        alpha[1] = logits.row(0)[ext(1)];
    }
    for t in 1..t_len {
        for s in 0..m {
            let mut acc = alpha[(t - 1) * m + s];
            if s >= 1 {
                acc = log_add(acc, alpha[(t - 1) * m + s - 1]);
            }
            if can_skip(s) {
                acc = log_add(acc, alpha[(t - 1) * m + s - 2]);
            }
            alpha[t * m + s] = acc + logits.row(t)[ext(s)];
        }
    }
    let mut log_p = alpha[(t_len - 1) * m + m - 1];
    if m > 1 {
        log_p = log_add(log_p, alpha[(t_len - 1) * m + m - 2]);
    }

    // beta includes the emission at its own frame, like alpha.
    let mut beta = vec![neg; t_len * m];
    beta[(t_len - 1) * m + m - 1] = logits.row(t_len - 1)[ext(m - 1)];
    if m > 1 {
        beta[(t_len - 1) * m + m - 2] = logits.row(t_len - 1)[ext(m - 2)];
    }
    for t in (0..t_len - 1).rev() {
        for s in (0..m).rev() {
            let mut acc = beta[(t + 1) * m + s];
            if s + 1 < m {
                acc = log_add(acc, beta[(t + 1) * m + s + 1]);
            }
            if s + 2 < m && can_skip(s + 2) {
                acc = log_add(acc, beta[(t + 1) * m + s + 2]);
            }
            beta[t * m + s] = acc + logits.row(t)[ext(s)];
        }
    }
    debug_assert!({
        let mut check = beta[0];
        if m > 1 {
            check = log_add(check, beta[1]);
        }
        (check - log_p).abs() <= 1e-6 * (1.0 + log_p.abs())
    });

    // State posterior gamma(t, s) = alpha * beta / (emission * P); the
    // emission probability is double-counted across alpha and beta.
    let mut grad = vec![0.0; t_len * vocab];
    for t in 0..t_len {
        let row = logits.row(t);
        let g = &mut grad[t * vocab..(t + 1) * vocab];
        for (v, g_v) in g.iter_mut().enumerate() {
            *g_v = row[v].exp();
        }
        for s in 0..m {
            let a = alpha[t * m + s];
            let b = beta[t * m + s];
            if a == neg || b == neg {
                continue;
            }
            let gamma = (a + b - row[ext(s)] - log_p).exp();
            g[ext(s)] -= gamma;
        }
    }

    Ok(CtcOutput {
        loss: -log_p,
        grad,
        feasible: true,
    })
}
