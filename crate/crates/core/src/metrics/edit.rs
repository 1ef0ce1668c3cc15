//! Levenshtein alignment with unit costs and a deterministic backtrace.

use serde::{Deserialize, Serialize};

/// Counts from an edit alignment. `ref_len` is the reference length the
/// errors are normalized by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditStats {
    pub ins: usize,
    pub del: usize,
    pub sub: usize,
    pub ref_len: usize,
}

impl EditStats {
    pub fn total_errors(&self) -> usize {
        self.ins + self.del + self.sub
    }

    /// Word error rate. An empty reference yields 0.0 against an empty
    /// hypothesis and +inf otherwise; callers can detect the flag with
    /// `is_infinite`.
    pub fn wer(&self) -> f64 {
        if self.ref_len == 0 {
            if self.total_errors() == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.total_errors() as f64 / self.ref_len as f64
        }
    }

    pub fn accumulate(&mut self, other: &EditStats) {
        self.ins += other.ins;
        self.del += other.del;
        self.sub += other.sub;
        self.ref_len += other.ref_len;
    }
}

/// Edit distance only, with O(min(n, m)) memory.
pub fn levenshtein_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let (short, long) = if reference.len() <= hypothesis.len() {
        (reference, hypothesis)
    } else {
        (hypothesis, reference)
    };
    let mut row: Vec<u32> = (0..=short.len() as u32).collect();
    for (i, lt) in long.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i as u32 + 1;
        for (j, st) in short.iter().enumerate() {
            let sub = diag + u32::from(lt != st);
            diag = row[j + 1];
            row[j + 1] = sub.min(diag + 1).min(row[j] + 1);
        }
    }
    row[short.len()] as usize
}

/// Full alignment with insertion/deletion/substitution counts. Ties during
/// backtrace prefer substitution, then deletion, then insertion, making the
/// breakdown deterministic for equal-distance alignments.
pub fn edit_stats<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditStats {
    let n = reference.len();
    let m = hypothesis.len();
    let width = m + 1;
    let mut d = vec![0u32; (n + 1) * width];
    for j in 0..=m {
        d[j] = j as u32;
    }
    for i in 1..=n {
        d[i * width] = i as u32;
        for j in 1..=m {
            let cost = u32::from(reference[i - 1] != hypothesis[j - 1]);
            let sub = d[(i - 1) * width + j - 1] + cost;
            let del = d[(i - 1) * width + j] + 1;
            let ins = d[i * width + j - 1] + 1;
            d[i * width + j] = sub.min(del).min(ins);
        }
    }
    let mut stats = EditStats {
        ref_len: n,
        ..EditStats::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * width + j];
        if i > 0 && j > 0 {
            let cost = u32::from(reference[i - 1] != hypothesis[j - 1]);
            if d[(i - 1) * width + j - 1] + cost == here {
                stats.sub += cost as usize;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[(i - 1) * width + j] + 1 == here {
            stats.del += 1;
            i -= 1;
            continue;
        }
        stats.ins += 1;
        j -= 1;
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn single_deletion() {
        let stats = edit_stats(&toks("a b c"), &toks("a c"));
        assert_eq!(
            stats,
            EditStats {
                ins: 0,
                del: 1,
                sub: 0,
                ref_len: 3
            }
        );
        assert!((stats.wer() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identical_sequences_have_zero_errors() {
        let stats = edit_stats(&toks("x y z"), &toks("x y z"));
        assert_eq!(stats.total_errors(), 0);
        assert_eq!(stats.wer(), 0.0);
    }

    #[test]
    fn empty_reference_flags() {
        let empty: Vec<&str> = vec![];
        assert_eq!(edit_stats(&empty, &empty).wer(), 0.0);
        let stats = edit_stats(&empty, &toks("a"));
        assert_eq!(stats.ins, 1);
        assert!(stats.wer().is_infinite());
    }

    #[test]
    fn mixed_edits() {
        // kitten -> sitting at the word level.
        let stats = edit_stats(&toks("k i t t e n"), &toks("s i t t i n g"));
        assert_eq!(stats.total_errors(), 3);
        assert_eq!(stats.sub, 2);
        assert_eq!(stats.ins, 1);
    }

    #[test]
    fn distance_matches_stats_totals() {
        let cases = [
            ("a b c d", "a c d b"),
            ("", "a b"),
            ("a a a", ""),
            ("w x y z", "w x y z"),
            ("a b a b a", "b a b a b"),
        ];
        for (r, h) in cases {
            let d = levenshtein_distance(&toks(r), &toks(h));
            let s = edit_stats(&toks(r), &toks(h));
            assert_eq!(d, s.total_errors(), "case ({r:?}, {h:?})");
        }
    }

    #[test]
    fn stats_counts_are_consistent_with_lengths() {
        // ref_len - del - sub = matched; hyp len = matched + ins + sub.
        let r = toks("a b c d e f");
        let h = toks("a x c f g");
        let s = edit_stats(&r, &h);
        assert_eq!(r.len(), s.ref_len);
        assert_eq!(h.len(), s.ref_len - s.del + s.ins);
    }
}
