//! Channel-agnostic WER: utterances are assigned to hypothesis channels so
//! that the summed edit distance between each channel's concatenated
//! references and its hypothesis is minimal.
//!
//! The search runs one dynamic program over states (utterance index, per-
//! channel hypothesis positions): processing utterance `i` on channel `c`
//! advances a Levenshtein slice along channel `c` while the other channel
//! positions stay fixed. Work and memory are O(N * L_ref * prod(L_c + 1) * C)
//! and states are capped by a configurable limit.

use std::collections::HashMap;

use crate::corpus::TokenSequence;

use super::edit::{edit_stats, levenshtein_distance, EditStats};
use super::MetricsError;

/// Default cap on the boundary-state count `prod(L_c + 1)`.
pub const DEFAULT_MAX_STATES: usize = 10_000_000;

const MAX_CHANNELS: usize = 255;
const MAX_BRUTE_ASSIGNMENTS: u128 = 1_000_000;
const INF: u32 = u32::MAX / 2;

/// Optimal assignment outcome: summed edit statistics over channels and the
/// chosen channel per utterance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrcResult {
    pub stats: EditStats,
    pub assignment: Vec<usize>,
}

/// Maps tokens to dense ids so sequence comparisons are integer compares.
fn intern<'a>(
    refs: &'a [TokenSequence],
    hyps: &'a [TokenSequence],
) -> (Vec<Vec<u32>>, Vec<Vec<u32>>) {
    fn map<'a>(ids: &mut HashMap<&'a str, u32>, seq: &'a TokenSequence) -> Vec<u32> {
        seq.tokens()
            .iter()
            .map(|t| {
                let next = ids.len() as u32;
                *ids.entry(t.as_str()).or_insert(next)
            })
            .collect()
    }
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let r = refs.iter().map(|s| map(&mut ids, s)).collect();
    let h = hyps.iter().map(|s| map(&mut ids, s)).collect();
    (r, h)
}

fn concat_assigned(
    refs: &[TokenSequence],
    assignment: &[usize],
    channel: usize,
) -> TokenSequence {
    let mut out = TokenSequence::default();
    for (r, &c) in refs.iter().zip(assignment) {
        if c == channel {
            out.extend(r);
        }
    }
    out
}

/// Recomputes the per-channel insertion/deletion/substitution breakdown for a
/// fixed assignment. The summed distance equals the assignment's cost.
fn breakdown(
    refs: &[TokenSequence],
    hyps: &[TokenSequence],
    assignment: &[usize],
) -> EditStats {
    let mut total = EditStats::default();
    for (c, hyp) in hyps.iter().enumerate() {
        let joined = concat_assigned(refs, assignment, c);
        total.accumulate(&edit_stats(joined.tokens(), hyp.tokens()));
    }
    total
}

/// [`orc_wer`] with an explicit boundary-state limit.
pub fn orc_wer_with_limit(
    refs: &[TokenSequence],
    hyps: &[TokenSequence],
    max_states: usize,
) -> Result<OrcResult, MetricsError> {
    let num_channels = hyps.len();
    if num_channels == 0 {
        return Err(MetricsError::NoChannels);
    }
    if num_channels > MAX_CHANNELS {
        return Err(MetricsError::TooManyChannels {
            got: num_channels,
            limit: MAX_CHANNELS,
        });
    }
    let (refs_i, hyps_i) = intern(refs, hyps);

    let dims: Vec<usize> = hyps_i.iter().map(|h| h.len() + 1).collect();
    let mut total_u128: u128 = 1;
    for &d in &dims {
        total_u128 = total_u128.saturating_mul(d as u128);
    }
    if total_u128 > max_states as u128 {
        return Err(MetricsError::StateSpaceTooLarge {
            states: total_u128,
            limit: max_states,
        });
    }
    let total = total_u128 as usize;
    let mut strides = vec![1usize; num_channels];
    for c in 1..num_channels {
        strides[c] = strides[c - 1] * dims[c - 1];
    }

    // boundary[state] = minimal cost with each channel consumed up to its
    // coordinate, all previous utterances placed. Initially every consumed
    // hypothesis token is an insertion.
    let mut boundary: Vec<u32> = (0..total)
        .map(|flat| {
            let mut rest = flat;
            let mut sum = 0u32;
            for c in 0..num_channels {
                sum += (rest % dims[c]) as u32;
                rest /= dims[c];
            }
            sum
        })
        .collect();

    // Per utterance and exit state: the channel taken and the channel
    // coordinate at entry, for the backtrace.
    let mut back: Vec<(Vec<u8>, Vec<u32>)> = Vec::with_capacity(refs_i.len());

    for utt in &refs_i {
        let mut next = vec![INF; total];
        let mut bp_channel = vec![0u8; total];
        let mut bp_entry = vec![0u32; total];
        for c in 0..num_channels {
            let stride = strides[c];
            let dim = dims[c];
            let hyp = &hyps_i[c];
            let mut row_prev = vec![0u32; dim];
            let mut org_prev = vec![0u32; dim];
            let mut row_cur = vec![0u32; dim];
            let mut org_cur = vec![0u32; dim];
            for base in 0..total {
                if (base / stride) % dim != 0 {
                    continue;
                }
                for j in 0..dim {
                    row_prev[j] = boundary[base + j * stride];
                    org_prev[j] = j as u32;
                }
                for &tok in utt {
                    row_cur[0] = row_prev[0] + 1;
                    org_cur[0] = org_prev[0];
                    for j in 1..dim {
                        let cost = u32::from(tok != hyp[j - 1]);
                        let mut best = row_prev[j - 1] + cost;
                        let mut org = org_prev[j - 1];
                        let del = row_prev[j] + 1;
                        if del < best {
                            best = del;
                            org = org_prev[j];
                        }
                        let ins = row_cur[j - 1] + 1;
                        if ins < best {
                            best = ins;
                            org = org_cur[j - 1];
                        }
                        row_cur[j] = best;
                        org_cur[j] = org;
                    }
                    std::mem::swap(&mut row_prev, &mut row_cur);
                    std::mem::swap(&mut org_prev, &mut org_cur);
                }
                // Lowest channel wins ties: only strict improvements replace.
                for j in 0..dim {
                    let flat = base + j * stride;
                    if row_prev[j] < next[flat] {
                        next[flat] = row_prev[j];
                        bp_channel[flat] = c as u8;
                        bp_entry[flat] = org_prev[j];
                    }
                }
            }
        }
        boundary = next;
        back.push((bp_channel, bp_entry));
    }

    // Close out: unconsumed hypothesis tokens are insertions.
    let mut best_cost = INF;
    let mut best_state = 0usize;
    for flat in 0..total {
        let mut rest = flat;
        let mut tail = 0u32;
        for c in 0..num_channels {
            tail += (dims[c] - 1 - rest % dims[c]) as u32;
            rest /= dims[c];
        }
        let cost = boundary[flat] + tail;
        if cost < best_cost {
            best_cost = cost;
            best_state = flat;
        }
    }

    let mut assignment = vec![0usize; refs_i.len()];
    let mut state = best_state;
    for i in (0..refs_i.len()).rev() {
        let (ref bp_channel, ref bp_entry) = back[i];
        let c = bp_channel[state] as usize;
        assignment[i] = c;
        let j_exit = (state / strides[c]) % dims[c];
        state = state - j_exit * strides[c] + bp_entry[state] as usize * strides[c];
    }

    let stats = breakdown(refs, hyps, &assignment);
    debug_assert_eq!(stats.total_errors(), best_cost as usize);
    Ok(OrcResult { stats, assignment })
}

/// Minimal-WER utterance-to-channel assignment via dynamic programming.
/// Ties prefer the lowest channel. See the module doc for complexity.
pub fn orc_wer(refs: &[TokenSequence], hyps: &[TokenSequence]) -> Result<OrcResult, MetricsError> {
    orc_wer_with_limit(refs, hyps, DEFAULT_MAX_STATES)
}

/// Exhaustive reference implementation: tries every channel assignment.
/// Intended for validating [`orc_wer`] on small instances.
pub fn orc_wer_bruteforce(
    refs: &[TokenSequence],
    hyps: &[TokenSequence],
) -> Result<OrcResult, MetricsError> {
    let num_channels = hyps.len();
    if num_channels == 0 {
        return Err(MetricsError::NoChannels);
    }
    let combos = u32::try_from(refs.len())
        .ok()
        .and_then(|n| (num_channels as u128).checked_pow(n))
        .filter(|&c| c <= MAX_BRUTE_ASSIGNMENTS)
        .ok_or(MetricsError::TooManyUtterances {
            count: refs.len(),
            limit: if num_channels > 1 {
                MAX_BRUTE_ASSIGNMENTS.ilog(num_channels as u128) as usize
            } else {
                usize::MAX
            },
        })?;
    let (refs_i, hyps_i) = intern(refs, hyps);
    let mut best_cost = usize::MAX;
    let mut best_assignment = vec![0usize; refs.len()];
    let mut assignment = vec![0usize; refs.len()];
    for combo in 0..combos {
        let mut rest = combo;
        for a in assignment.iter_mut() {
            *a = (rest % num_channels as u128) as usize;
            rest /= num_channels as u128;
        }
        let mut cost = 0usize;
        for (c, hyp) in hyps_i.iter().enumerate() {
            let joined: Vec<u32> = refs_i
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .flat_map(|(r, _)| r.iter().copied())
                .collect();
            cost += levenshtein_distance(&joined, hyp);
            if cost >= best_cost {
                break;
            }
        }
        if cost < best_cost {
            best_cost = cost;
            best_assignment.copy_from_slice(&assignment);
        }
    }
    let stats = breakdown(refs, hyps, &best_assignment);
    debug_assert_eq!(stats.total_errors(), best_cost);
    Ok(OrcResult {
        stats,
        assignment: best_assignment,
    })
}
