//! First-fit channel assignment for overlapped utterances and construction of
//! per-channel reference token sequences.
//!
//! Utterances sorted by start time are routed to a fixed set of output
//! channels: each goes to the lowest-indexed channel that is free at its
//! start time, so each channel carries non-overlapping speech and overlapping
//! utterances land on different channels. An utterance that starts exactly
//! where the previous one on a channel ends is not an overlap and reuses that
//! channel.

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Segment, TokenSequence};

#[derive(Debug, thiserror::Error)]
pub enum HeatError {
    #[error("utterance {index} breaks (start, end, id) sort order")]
    NotSorted { index: usize },
    #[error("channel assignment needs at least 2 channels, got {num_channels}")]
    TooFewChannels { num_channels: usize },
    #[error("{utterances} utterances but assignment covers {assignment}")]
    LengthMismatch { utterances: usize, assignment: usize },
    #[error("utterance {index} assigned to channel {channel}, but only {num_channels} exist")]
    ChannelOutOfRange {
        index: usize,
        channel: usize,
        num_channels: usize,
    },
}

/// Channel routing for a sorted utterance list. `channel_of[n]` is the
/// 0-based output channel of utterance `n`; `conflicts` lists utterances that
/// overlapped every channel and were force-placed on the
/// earliest-to-free one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelAssignment {
    pub channel_of: Vec<usize>,
    pub num_channels: usize,
    pub conflicts: Vec<usize>,
}

/// Per-channel reference token sequences. `boundaries[c]` lists, in order,
/// the utterance index at which each constituent of channel `c` begins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelReferences {
    pub per_channel: Vec<TokenSequence>,
    pub boundaries: Vec<Vec<usize>>,
}

fn check_sorted(utterances: &[Segment]) -> Result<(), HeatError> {
    for (i, pair) in utterances.windows(2).enumerate() {
        let key = |s: &Segment| (s.start, s.end);
        let (a, b) = (&pair[0], &pair[1]);
        let ordered = match key(a).0.total_cmp(&key(b).0) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => match key(a).1.total_cmp(&key(b).1) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Greater => false,
                std::cmp::Ordering::Equal => a.id <= b.id,
            },
        };
        if !ordered {
            return Err(HeatError::NotSorted { index: i + 1 });
        }
    }
    Ok(())
}

/// Assigns each utterance to the lowest-indexed channel whose latest end time
/// is at or before the utterance's start. When no channel is free the
/// utterance is flagged as a conflict and placed on the channel that frees up
/// earliest (lowest index on ties).
///
/// Requires utterances sorted by (start, end, id) and `num_channels >= 2`.
/// With at most `num_channels` simultaneously active speakers the result has
/// no conflicts and every channel carries non-overlapping utterances.
pub fn assign(utterances: &[Segment], num_channels: usize) -> Result<ChannelAssignment, HeatError> {
    if num_channels < 2 {
        return Err(HeatError::TooFewChannels { num_channels });
    }
    check_sorted(utterances)?;
    let mut ends = vec![f64::NEG_INFINITY; num_channels];
    let mut channel_of = Vec::with_capacity(utterances.len());
    let mut conflicts = Vec::new();
    for (n, utt) in utterances.iter().enumerate() {
        let free = ends.iter().position(|&e| e <= utt.start);
        let c = match free {
            Some(c) => c,
            None => {
                let c = ends
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
                    .expect("num_channels >= 2");
                conflicts.push(n);
                c
            }
        };
        ends[c] = ends[c].max(utt.end);
        channel_of.push(c);
    }
    Ok(ChannelAssignment {
        channel_of,
        num_channels,
        conflicts,
    })
}

/// Concatenates utterance token sequences per channel, in utterance order.
/// Requires the assignment to cover exactly these utterances.
pub fn build_references(
    utterances: &[Segment],
    assignment: &ChannelAssignment,
) -> Result<ChannelReferences, HeatError> {
    if utterances.len() != assignment.channel_of.len() {
        return Err(HeatError::LengthMismatch {
            utterances: utterances.len(),
            assignment: assignment.channel_of.len(),
        });
    }
    let mut per_channel = vec![TokenSequence::default(); assignment.num_channels];
    let mut boundaries = vec![Vec::new(); assignment.num_channels];
    for (n, utt) in utterances.iter().enumerate() {
        let c = assignment.channel_of[n];
        if c >= assignment.num_channels {
            return Err(HeatError::ChannelOutOfRange {
                index: n,
                channel: c,
                num_channels: assignment.num_channels,
            });
        }
        boundaries[c].push(n);
        per_channel[c].extend(&tokenize(&utt.text));
    }
    Ok(ChannelReferences {
        per_channel,
        boundaries,
    })
}
