//! Full-sum transducer loss over the T x (U+1) lattice.
//!
//! Node (t, u) means t frames consumed and u labels emitted. Arcs: emitting
//! label u+1 moves (t, u) -> (t, u+1) with weight log p(y_{u+1} | t, u);
//! blank moves (t, u) -> (t+1, u) with weight log p(blank | t, u); the path
//! ends with the blank at (T-1, U). The loss marginalizes all monotone
//! alignments; the gradient and occupancies come from the same
//! forward-backward pass.

use super::types::{trivial_join, LogitsTensor, TrivialJoinerInput};
use super::{log_add, validate_labels, LatticeError};

/// Loss and its gradient w.r.t. pre-softmax logits, laid out like the input
/// tensor (row-major T x (U+1) x V).
#[derive(Debug, Clone)]
pub struct RnntOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Posterior visit probabilities. `node` and `blank` are T x (U+1) row-major,
/// `emit` is T x U; `blank` includes the terminal blank at (T-1, U).
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub frames: usize,
    pub labels: usize,
    pub node: Vec<f64>,
    pub emit: Vec<f64>,
    pub blank: Vec<f64>,
}

impl OccupancyGrid {
    pub fn node(&self, t: usize, u: usize) -> f64 {
        self.node[t * (self.labels + 1) + u]
    }

    pub fn emit(&self, t: usize, u: usize) -> f64 {
        self.emit[t * self.labels + u]
    }

    pub fn blank(&self, t: usize, u: usize) -> f64 {
        self.blank[t * (self.labels + 1) + u]
    }
}

struct Lattice<'a> {
    logits: &'a LogitsTensor,
    labels: &'a [usize],
    alpha: Vec<f64>,
    beta: Vec<f64>,
    log_p: f64,
}

fn check_inputs(logits: &LogitsTensor, labels: &[usize]) -> Result<(), LatticeError> {
    if labels.len() != logits.labels() {
        return Err(LatticeError::LabelCountMismatch {
            expected: logits.labels(),
            got: labels.len(),
        });
    }
    validate_labels(labels, logits.vocab(), logits.blank())
}

fn forward_backward<'a>(
    logits: &'a LogitsTensor,
    labels: &'a [usize],
) -> Result<Lattice<'a>, LatticeError> {
    check_inputs(logits, labels)?;
    let t_len = logits.frames();
    let u_len = labels.len();
    let slots = u_len + 1;
    let blank = logits.blank();
    let idx = |t: usize, u: usize| t * slots + u;

    let mut alpha = vec![f64::NEG_INFINITY; t_len * slots];
    alpha[0] = 0.0;
    for t in 0..t_len {
        for u in 0..slots {
            let here = alpha[idx(t, u)];
            if here == f64::NEG_INFINITY {
                continue;
            }
            if u < u_len {
                let next = &mut alpha[idx(t, u + 1)];
                *next = log_add(*next, here + logits.log_prob(t, u, labels[u]));
            }
            if t + 1 < t_len {
                let next = &mut alpha[idx(t + 1, u)];
                *next = log_add(*next, here + logits.log_prob(t, u, blank));
            }
        }
    }
    let log_p = alpha[idx(t_len - 1, u_len)] + logits.log_prob(t_len - 1, u_len, blank);

    // beta(t, u) = log-probability of completing the path from (t, u),
    // including the terminal blank; beta(0, 0) = log_p.
    let mut beta = vec![f64::NEG_INFINITY; t_len * slots];
    beta[idx(t_len - 1, u_len)] = logits.log_prob(t_len - 1, u_len, blank);
    for t in (0..t_len).rev() {
        for u in (0..slots).rev() {
            if t == t_len - 1 && u == u_len {
                continue;
            }
            let mut acc = f64::NEG_INFINITY;
            if u < u_len {
                acc = log_add(acc, logits.log_prob(t, u, labels[u]) + beta[idx(t, u + 1)]);
            }
            if t + 1 < t_len {
                acc = log_add(acc, logits.log_prob(t, u, blank) + beta[idx(t + 1, u)]);
            }
            beta[idx(t, u)] = acc;
        }
    }
    debug_assert!(
        (beta[0] - log_p).abs() <= 1e-6 * (1.0 + log_p.abs()),
        "forward/backward disagree: {} vs {log_p}",
        beta[0]
    );
    Ok(Lattice {
        logits,
        labels,
        alpha,
        beta,
        log_p,
    })
}

impl Lattice<'_> {
    fn slots(&self) -> usize {
        self.labels.len() + 1
    }

    /// Posterior of the emit arc out of (t, u); 0 when u = U.
    fn emit_occ(&self, t: usize, u: usize) -> f64 {
        if u >= self.labels.len() {
            return 0.0;
        }
        let s = self.logits.log_prob(t, u, self.labels[u]);
        (self.alpha[t * self.slots() + u] + s + self.beta[t * self.slots() + u + 1] - self.log_p)
            .exp()
    }

    /// Posterior of the blank arc out of (t, u), including the terminal one.
    fn blank_occ(&self, t: usize, u: usize) -> f64 {
        let slots = self.slots();
        let s = self.logits.log_prob(t, u, self.logits.blank());
        if t + 1 < self.logits.frames() {
            (self.alpha[t * slots + u] + s + self.beta[(t + 1) * slots + u] - self.log_p).exp()
        } else if u == self.labels.len() {
            (self.alpha[t * slots + u] + s - self.log_p).exp()
        } else {
            0.0
        }
    }
}

/// Negative log marginal probability of `labels` and its exact gradient
/// w.r.t. pre-softmax logits. Requires labels to match the tensor's U and to
/// avoid the blank id.
pub fn rnnt_loss(logits: &LogitsTensor, labels: &[usize]) -> Result<RnntOutput, LatticeError> {
    let lat = forward_backward(logits, labels)?;
    let t_len = logits.frames();
    let slots = labels.len() + 1;
    let vocab = logits.vocab();
    let mut grad = vec![0.0; t_len * slots * vocab];
    for t in 0..t_len {
        for u in 0..slots {
            let emit = lat.emit_occ(t, u);
            let blank = lat.blank_occ(t, u);
            let out_mass = emit + blank;
            let base = (t * slots + u) * vocab;
            if out_mass == 0.0 {
                continue;
            }
            for v in 0..vocab {
                grad[base + v] = logits.log_prob(t, u, v).exp() * out_mass;
            }
            if u < labels.len() {
                grad[base + labels[u]] -= emit;
            }
            grad[base + logits.blank()] -= blank;
        }
    }
    Ok(RnntOutput {
        loss: -lat.log_p,
        grad,
    })
}

/// Loss only, skipping the backward pass and gradient.
pub(crate) fn rnnt_loss_value(
    logits: &LogitsTensor,
    labels: &[usize],
) -> Result<f64, LatticeError> {
    check_inputs(logits, labels)?;
    let t_len = logits.frames();
    let u_len = labels.len();
    let slots = u_len + 1;
    let blank = logits.blank();
    let mut alpha = vec![f64::NEG_INFINITY; t_len * slots];
    alpha[0] = 0.0;
    for t in 0..t_len {
        for u in 0..slots {
            let here = alpha[t * slots + u];
            if here == f64::NEG_INFINITY {
                continue;
            }
            if u < u_len {
                let next = &mut alpha[t * slots + u + 1];
                *next = log_add(*next, here + logits.log_prob(t, u, labels[u]));
            }
            if t + 1 < t_len {
                let next = &mut alpha[(t + 1) * slots + u];
                *next = log_add(*next, here + logits.log_prob(t, u, blank));
            }
        }
    }
    Ok(-(alpha[t_len * slots - 1] + logits.log_prob(t_len - 1, u_len, blank)))
}

/// Posterior node and arc visit probabilities from forward-backward.
pub fn occupancy(logits: &LogitsTensor, labels: &[usize]) -> Result<OccupancyGrid, LatticeError> {
    let lat = forward_backward(logits, labels)?;
    let t_len = logits.frames();
    let u_len = labels.len();
    let slots = u_len + 1;
    let mut node = vec![0.0; t_len * slots];
    let mut emit = vec![0.0; t_len * u_len];
    let mut blank = vec![0.0; t_len * slots];
    for t in 0..t_len {
        for u in 0..slots {
            let i = t * slots + u;
            node[i] = (lat.alpha[i] + lat.beta[i] - lat.log_p).exp().clamp(0.0, 1.0);
            blank[i] = lat.blank_occ(t, u).clamp(0.0, 1.0);
            if u < u_len {
                emit[t * u_len + u] = lat.emit_occ(t, u).clamp(0.0, 1.0);
            }
        }
    }
    Ok(OccupancyGrid {
        frames: t_len,
        labels: u_len,
        node,
        emit,
        blank,
    })
}

/// [`occupancy`] on the trivial joiner's lattice.
pub fn occupancy_from_trivial(
    input: &TrivialJoinerInput,
    labels: &[usize],
) -> Result<OccupancyGrid, LatticeError> {
    occupancy(&trivial_join(input)?, labels)
}
