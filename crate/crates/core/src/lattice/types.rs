//! Dense tensors for the loss kernels and the trivial add-and-normalize
//! joiner.

use serde::{Deserialize, Serialize};

use super::{log_softmax, log_sum_exp, LatticeError};

/// Row-major 2-D array of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LatticeError> {
        if data.len() != rows * cols {
            return Err(LatticeError::ShapeMismatch {
                what: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(LatticeError::NonFinite { what: "matrix" });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Per-node vocabulary log-probabilities over the `T x (U+1)` lattice,
/// normalized so logsumexp over the vocabulary axis is 0 at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitsTensor {
    frames: usize,
    labels: usize,
    vocab: usize,
    blank: usize,
    log_probs: Vec<f64>,
}

impl LogitsTensor {
    /// Builds from raw (unnormalized) logits, applying log-softmax per node.
    pub fn from_raw(
        frames: usize,
        labels: usize,
        vocab: usize,
        blank: usize,
        mut values: Vec<f64>,
    ) -> Result<Self, LatticeError> {
        Self::check_shape(frames, labels, vocab, blank, &values)?;
        for node in values.chunks_mut(vocab) {
            log_softmax(node);
        }
        Ok(LogitsTensor {
            frames,
            labels,
            vocab,
            blank,
            log_probs: values,
        })
    }

    /// Builds from already-normalized log-probabilities, verifying that
    /// logsumexp over the vocabulary is 0 (within 1e-8) at every node.
    pub fn from_normalized(
        frames: usize,
        labels: usize,
        vocab: usize,
        blank: usize,
        values: Vec<f64>,
    ) -> Result<Self, LatticeError> {
        Self::check_shape(frames, labels, vocab, blank, &values)?;
        for (i, node) in values.chunks(vocab).enumerate() {
            let log_sum = log_sum_exp(node);
            if log_sum.abs() > 1e-8 {
                return Err(LatticeError::NotNormalized {
                    frame: i / (labels + 1),
                    slot: i % (labels + 1),
                    log_sum,
                });
            }
        }
        Ok(LogitsTensor {
            frames,
            labels,
            vocab,
            blank,
            log_probs: values,
        })
    }

    fn check_shape(
        frames: usize,
        labels: usize,
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
        let expected = frames * (labels + 1) * vocab;
        if values.len() != expected {
            return Err(LatticeError::ShapeMismatch {
                what: "logits",
                expected,
                got: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(LatticeError::NonFinite { what: "logits" });
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Label count U; the tensor has U+1 label slots.
    pub fn labels(&self) -> usize {
        self.labels
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn blank(&self) -> usize {
        self.blank
    }

    /// Normalized log-probabilities at node (t, u).
    pub fn node(&self, t: usize, u: usize) -> &[f64] {
        let base = (t * (self.labels + 1) + u) * self.vocab;
        &self.log_probs[base..base + self.vocab]
    }

    pub fn log_prob(&self, t: usize, u: usize, v: usize) -> f64 {
        self.log_probs[(t * (self.labels + 1) + u) * self.vocab + v]
    }
}

/// Inputs to the trivial joiner: per-frame logits `enc` (T x V), per-label
/// logits `pred` ((U+1) x V), and the blank id.
#[derive(Debug, Clone, PartialEq)]
pub struct TrivialJoinerInput {
    pub enc: Matrix,
    pub pred: Matrix,
    pub blank: usize,
}

impl TrivialJoinerInput {
    pub fn new(enc: Matrix, pred: Matrix, blank: usize) -> Result<Self, LatticeError> {
        if enc.cols() != pred.cols() {
            return Err(LatticeError::ShapeMismatch {
                what: "joiner vocabulary",
                expected: enc.cols(),
                got: pred.cols(),
            });
        }
        if enc.rows() == 0 {
            return Err(LatticeError::NoFrames);
        }
        if pred.rows() == 0 {
            return Err(LatticeError::ShapeMismatch {
                what: "pred rows (U+1)",
                expected: 1,
                got: 0,
            });
        }
        if blank >= enc.cols() {
            return Err(LatticeError::InvalidBlank {
                blank,
                vocab: enc.cols(),
            });
        }
        Ok(TrivialJoinerInput { enc, pred, blank })
    }

    pub fn frames(&self) -> usize {
        self.enc.rows()
    }

    /// Label count U (pred has U+1 rows).
    pub fn labels(&self) -> usize {
        self.pred.rows() - 1
    }

    pub fn vocab(&self) -> usize {
        self.enc.cols()
    }

    /// Raw joint logits at node (t, u): enc[t] + pred[u], before
    /// normalization.
    pub(crate) fn raw_node(&self, t: usize, u: usize, out: &mut [f64]) {
        let e = self.enc.row(t);
        let p = self.pred.row(u);
        for ((o, &ev), &pv) in out.iter_mut().zip(e).zip(p) {
            *o = ev + pv;
        }
    }
}

/// Evaluates the trivial joiner on every lattice node: the per-node
/// distribution is log-softmax(enc[t] + pred[u]).
pub fn trivial_join(input: &TrivialJoinerInput) -> Result<LogitsTensor, LatticeError> {
    let frames = input.frames();
    let slots = input.pred.rows();
    let vocab = input.vocab();
    let mut values = vec![0.0; frames * slots * vocab];
    for t in 0..frames {
        for u in 0..slots {
            let base = (t * slots + u) * vocab;
            input.raw_node(t, u, &mut values[base..base + vocab]);
        }
    }
    LogitsTensor::from_raw(frames, slots - 1, vocab, input.blank, values)
}
