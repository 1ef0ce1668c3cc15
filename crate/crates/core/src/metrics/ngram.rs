//! Channel-level n-gram diagnostics. Leakage measures reference n-grams that
//! surface on two or more hypothesis channels (cross-channel duplication);
//! omission measures reference n-grams that surface on none.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::TokenSequence;

use super::MetricsError;

/// Diagnostics over the set of unique reference n-grams. `leaked`, `omitted`,
/// and the derived rates partition together with the single-channel case:
/// leakage + omission + (exactly-one rate) = 1 when `total_unique > 0`.
/// `total_unique == 0` flags an empty diagnostic; both rates are then 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NGramDiagnostics {
    pub n: usize,
    pub total_unique: usize,
    pub leaked: usize,
    pub omitted: usize,
    pub leakage: f64,
    pub omission: f64,
}

/// Collects the unique n-grams of each reference utterance (n-grams never
/// cross utterance boundaries) and tests, per hypothesis channel, whether
/// each occurs as a contiguous token run anywhere in the channel.
pub fn ngram_diagnostics(
    refs: &[TokenSequence],
    hyps: &[TokenSequence],
    n: usize,
) -> Result<NGramDiagnostics, MetricsError> {
    if n == 0 {
        return Err(MetricsError::InvalidNgramOrder);
    }
    let mut reference: HashSet<&[String]> = HashSet::new();
    for r in refs {
        for gram in r.tokens().windows(n) {
            reference.insert(gram);
        }
    }
    let channels: Vec<HashSet<&[String]>> = hyps
        .iter()
        .map(|h| h.tokens().windows(n).collect())
        .collect();

    let total_unique = reference.len();
    let mut leaked = 0usize;
    let mut omitted = 0usize;
    for gram in &reference {
        let hits = channels.iter().filter(|c| c.contains(gram)).count();
        match hits {
            0 => omitted += 1,
            1 => {}
            _ => leaked += 1,
        }
    }
    let rate = |count: usize| {
        if total_unique == 0 {
            0.0
        } else {
            count as f64 / total_unique as f64
        }
    };
    Ok(NGramDiagnostics {
        n,
        total_unique,
        leaked,
        omitted,
        leakage: rate(leaked),
        omission: rate(omitted),
    })
}
