//! Speaker-paired WER: each reference speaker's concatenated stream is paired
//! with exactly one hypothesis channel (padding the smaller side with empty
//! streams) so that the summed edit distance is minimal.

use crate::corpus::TokenSequence;

use super::edit::{edit_stats, levenshtein_distance, EditStats};
use super::MetricsError;

/// Pairing supports at most this many speakers or channels; the assignment
/// search is exponential in their count.
const MAX_GROUPS: usize = 16;

/// Pairing outcome. `channel_of_speaker[s]` is the hypothesis channel paired
/// with reference speaker `s`, or `None` when the speaker was paired with a
/// padded empty channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CpWerResult {
    pub stats: EditStats,
    pub channel_of_speaker: Vec<Option<usize>>,
}

/// Like [`cp_wer`] but also reports the chosen pairing.
pub fn cp_wer_detailed(
    ref_by_speaker: &[TokenSequence],
    hyps: &[TokenSequence],
) -> Result<CpWerResult, MetricsError> {
    let n = ref_by_speaker.len().max(hyps.len());
    if n > MAX_GROUPS {
        return Err(MetricsError::TooManyGroups {
            count: n,
            limit: MAX_GROUPS,
        });
    }
    if n == 0 {
        return Ok(CpWerResult {
            stats: EditStats::default(),
            channel_of_speaker: Vec::new(),
        });
    }
    let empty = TokenSequence::default();
    let speaker = |i: usize| ref_by_speaker.get(i).unwrap_or(&empty);
    let channel = |j: usize| hyps.get(j).unwrap_or(&empty);

    let mut cost = vec![0u32; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] =
                levenshtein_distance(speaker(i).tokens(), channel(j).tokens()) as u32;
        }
    }

    // dp[mask] = minimal cost of pairing speakers 0..popcount(mask) with the
    // channel set `mask`.
    let full = 1usize << n;
    let mut dp = vec![u32::MAX; full];
    dp[0] = 0;
    for mask in 1..full {
        let i = mask.count_ones() as usize - 1;
        let mut best = u32::MAX;
        let mut rest = mask;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let prev = dp[mask & !(1 << j)];
            if prev != u32::MAX {
                best = best.min(prev + cost[i * n + j]);
            }
        }
        dp[mask] = best;
    }

    // Recover the pairing; ties take the lowest channel index.
    let mut pairing = vec![0usize; n];
    let mut mask = full - 1;
    for i in (0..n).rev() {
        let mut chosen = None;
        let mut rest = mask;
        while rest != 0 {
            let j = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let prev = dp[mask & !(1 << j)];
            if prev != u32::MAX && prev + cost[i * n + j] == dp[mask] {
                chosen = Some(j);
                break;
            }
        }
        let j = chosen.expect("dp table admits a pairing");
        pairing[i] = j;
        mask &= !(1 << j);
    }

    let mut stats = EditStats::default();
    for (i, &j) in pairing.iter().enumerate() {
        stats.accumulate(&edit_stats(speaker(i).tokens(), channel(j).tokens()));
    }
    debug_assert_eq!(stats.total_errors(), dp[full - 1] as usize);

    let channel_of_speaker = pairing
        .iter()
        .take(ref_by_speaker.len())
        .map(|&j| if j < hyps.len() { Some(j) } else { None })
        .collect();
    Ok(CpWerResult {
        stats,
        channel_of_speaker,
    })
}

/// Speaker-paired edit statistics, normalized by the total reference length.
pub fn cp_wer(
    ref_by_speaker: &[TokenSequence],
    hyps: &[TokenSequence],
) -> Result<EditStats, MetricsError> {
    cp_wer_detailed(ref_by_speaker, hyps).map(|r| r.stats)
}
