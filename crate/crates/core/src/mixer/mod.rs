//! Pause/overlap statistics fitting and multi-talker mixture simulation.
//!
//! `fit_stats` measures gaps between consecutive utterances of real meetings
//! and bins them into three histograms: pauses between turns of the same
//! speaker, pauses between different speakers, and overlaps. The overlap
//! probability `p_ovl` is the fraction of different-speaker turn changes that
//! overlap. `generate_mixtures` replays those statistics over a pool of
//! single-speaker segments: segments are bucketed by speaker, each mixture
//! draws up to `max_speakers` speakers and per speaker up to
//! `max_speaker_dur` seconds of segments, shuffles them, and accumulates
//! offsets by sampling gaps from the histograms. Buckets are consumed without
//! replacement until all are empty, so every source segment appears in at
//! most one mixture. `render_audio` turns a mixture spec into waveforms.

mod audio;
mod loudness;

pub use audio::{read_wav_channel, render_audio, write_wav_f32, write_wav_i16, RenderedMixture};
pub use loudness::{integrated_loudness, loudness_gain};

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Meeting, Segment};
use crate::heat::HeatError;
use crate::rng::derive_seed;
use crate::rng::SeedRng;

/// Default signal-to-noise ratio in dB for the additive noise stage.
pub const DEFAULT_NOISE_SNR_DB: f64 = 20.0;

/// Default histogram bin width in seconds for statistics fitting.
pub const DEFAULT_BIN_WIDTH: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum MixerError {
    #[error("histogram bin width must be a positive finite number, got {bin_width}")]
    InvalidBinWidth { bin_width: f64 },
    #[error("invalid histogram: {reason}")]
    InvalidHistogram { reason: String },
    #[error("cannot sample from empty {which} histogram")]
    EmptyHistogram { which: &'static str },
    #[error("invalid statistics: {reason}")]
    InvalidStats { reason: String },
    #[error("no consecutive utterance pairs found in any meeting")]
    NoPairs,
    #[error("meeting {meeting}: segment {index} breaks start-time order")]
    UnsortedMeeting { meeting: String, index: usize },
    #[error("invalid generation config: {reason}")]
    InvalidConfig { reason: String },
    #[error("no segments fit within the per-speaker duration budget")]
    NoUsableSegments,
    #[error("mixture {id} has no entries")]
    EmptyMixture { id: String },
    #[error("segment {segment} carries no source audio")]
    MissingAudio { segment: String },
    #[error("{path}: sample rate {got} does not match {expected}")]
    SampleRateMismatch {
        path: PathBuf,
        expected: u32,
        got: u32,
    },
    #[error("{path}: channel {channel} requested but file has {channels}")]
    ChannelOutOfRange {
        path: PathBuf,
        channel: u32,
        channels: u16,
    },
    #[error("{path}: unsupported audio format: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("no .wav files in {dir}")]
    EmptyDir { dir: PathBuf },
    #[error(transparent)]
    Heat(#[from] HeatError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        source: hound::Error,
    },
}

/// Fixed-width histogram over non-negative seconds.
///
/// Bins are keyed by their lower edge `k * bin_width`. A bin width of zero is
/// the degenerate point-mass mode: every distinct value is its own bin and
/// sampling returns the stored values exactly, which realizes fixed-value
/// gap distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bin_width: f64,
    bins: Vec<(f64, u64)>,
}

impl Histogram {
    /// Creates an empty histogram. `bin_width` must be finite and `>= 0`.
    pub fn new(bin_width: f64) -> Result<Self, MixerError> {
        if !bin_width.is_finite() || bin_width < 0.0 {
            return Err(MixerError::InvalidBinWidth { bin_width });
        }
        Ok(Self {
            bin_width,
            bins: Vec::new(),
        })
    }

    /// Builds a histogram from explicit `(lower_edge, count)` pairs. Edges
    /// must be finite and non-negative; duplicates are merged and zero
    /// counts dropped.
    pub fn from_bins(bin_width: f64, bins: Vec<(f64, u64)>) -> Result<Self, MixerError> {
        let mut hist = Self::new(bin_width)?;
        for (lo, count) in bins {
            if !lo.is_finite() || lo < 0.0 {
                return Err(MixerError::InvalidHistogram {
                    reason: format!("bin edge {lo} is not a non-negative finite number"),
                });
            }
            if count > 0 {
                hist.add_to_bin(lo, count);
            }
        }
        Ok(hist)
    }

    /// Adds one observation. Negative values count into the bin at zero.
    pub fn add(&mut self, value: f64) {
        let value = value.max(0.0);
        let lo = if self.bin_width == 0.0 {
            value
        } else {
            // The epsilon keeps values that land a rounding error below a
            // bin edge in the bin that starts at that edge.
            let k = (value / self.bin_width + 1e-9).floor().max(0.0);
            k * self.bin_width
        };
        self.add_to_bin(lo, 1);
    }

    fn add_to_bin(&mut self, lo: f64, count: u64) {
        match self
            .bins
            .binary_search_by(|&(edge, _)| edge.total_cmp(&lo))
        {
            Ok(i) => self.bins[i].1 += count,
            Err(i) => self.bins.insert(i, (lo, count)),
        }
    }

    /// Total observation count.
    pub fn total(&self) -> u64 {
        self.bins.iter().map(|&(_, c)| c).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// `(lower_edge, count)` pairs sorted by edge.
    pub fn bins(&self) -> &[(f64, u64)] {
        &self.bins
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// Draws a bin proportionally to its count, then a value uniformly
    /// within the bin: `lo + u * bin_width` with `u` in `[0, 1)`.
    pub fn sample<R: Rng>(&self, which: &'static str, rng: &mut R) -> Result<f64, MixerError> {
        let total = self.total();
        if total == 0 {
            return Err(MixerError::EmptyHistogram { which });
        }
        let mut r = rng.gen_range(0..total);
        let mut lo = self.bins[self.bins.len() - 1].0;
        for &(edge, count) in &self.bins {
            if r < count {
                lo = edge;
                break;
            }
            r -= count;
        }
        Ok(lo + rng.gen::<f64>() * self.bin_width)
    }

    /// Earth mover's distance between the two histograms viewed as
    /// probability distributions with mass at bin centers. `None` if either
    /// histogram is empty.
    pub fn emd(&self, other: &Histogram) -> Option<f64> {
        let (ta, tb) = (self.total(), other.total());
        if ta == 0 || tb == 0 {
            return None;
        }
        let mut points: Vec<(f64, f64)> = Vec::new();
        for &(lo, c) in &self.bins {
            points.push((lo + 0.5 * self.bin_width, c as f64 / ta as f64));
        }
        for &(lo, c) in &other.bins {
            points.push((lo + 0.5 * other.bin_width, -(c as f64) / tb as f64));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut emd = 0.0;
        let mut cum = 0.0;
        for pair in points.windows(2) {
            cum += pair[0].1;
            emd += cum.abs() * (pair[1].0 - pair[0].0);
        }
        Some(emd)
    }
}

/// Serialized form of [`PauseStats`]: bins as `[lower_edge, count]` pairs.
#[derive(Serialize, Deserialize)]
struct StatsFile {
    bin_width: f64,
    same_spk: Vec<(f64, u64)>,
    diff_spk: Vec<(f64, u64)>,
    overlap: Vec<(f64, u64)>,
    p_ovl: f64,
}

/// Gap statistics between consecutive utterances of a meeting corpus.
///
/// `same_spk` holds pauses between turns of the same speaker, `diff_spk`
/// positive pauses between different speakers, and `overlap` the magnitude
/// of negative gaps between different speakers. `p_ovl` is the probability
/// that a different-speaker turn change overlaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StatsFile", into = "StatsFile")]
pub struct PauseStats {
    pub bin_width: f64,
    pub same_spk: Histogram,
    pub diff_spk: Histogram,
    pub overlap: Histogram,
    pub p_ovl: f64,
}

impl TryFrom<StatsFile> for PauseStats {
    type Error = MixerError;

    fn try_from(file: StatsFile) -> Result<Self, MixerError> {
        if !file.bin_width.is_finite() || file.bin_width < 0.0 {
            return Err(MixerError::InvalidBinWidth {
                bin_width: file.bin_width,
            });
        }
        if !file.p_ovl.is_finite() || !(0.0..=1.0).contains(&file.p_ovl) {
            return Err(MixerError::InvalidStats {
                reason: format!("p_ovl {} is not in [0, 1]", file.p_ovl),
            });
        }
        let stats = PauseStats {
            bin_width: file.bin_width,
            same_spk: Histogram::from_bins(file.bin_width, file.same_spk)?,
            diff_spk: Histogram::from_bins(file.bin_width, file.diff_spk)?,
            overlap: Histogram::from_bins(file.bin_width, file.overlap)?,
            p_ovl: file.p_ovl,
        };
        if stats.p_ovl > 0.0 && stats.overlap.is_empty() {
            return Err(MixerError::InvalidStats {
                reason: "p_ovl is positive but the overlap histogram is empty".into(),
            });
        }
        Ok(stats)
    }
}

impl From<PauseStats> for StatsFile {
    fn from(stats: PauseStats) -> Self {
        StatsFile {
            bin_width: stats.bin_width,
            same_spk: stats.same_spk.bins.clone(),
            diff_spk: stats.diff_spk.bins.clone(),
            overlap: stats.overlap.bins.clone(),
            p_ovl: stats.p_ovl,
        }
    }
}

/// Fits gap histograms over consecutive segment pairs of each meeting.
///
/// For each pair the gap is `current.start - previous.end`. Same-speaker
/// gaps go to `same_spk` (negative values are clamped to zero with a
/// warning); different-speaker gaps go to `diff_spk` when positive and to
/// `overlap` (as `-gap`) otherwise. Segments must already be sorted by start
/// time within each meeting. Errors when no meeting has two consecutive
/// segments.
pub fn fit_stats(meetings: &[Meeting], bin_width: f64) -> Result<PauseStats, MixerError> {
    if !bin_width.is_finite() || bin_width <= 0.0 {
        return Err(MixerError::InvalidBinWidth { bin_width });
    }
    let mut same_spk = Histogram::new(bin_width)?;
    let mut diff_spk = Histogram::new(bin_width)?;
    let mut overlap = Histogram::new(bin_width)?;
    let mut pairs = 0u64;
    let mut clamped = 0u64;
    for meeting in meetings {
        for (i, pair) in meeting.segments.windows(2).enumerate() {
            let (prev, cur) = (&pair[0], &pair[1]);
            if cur.start < prev.start {
                return Err(MixerError::UnsortedMeeting {
                    meeting: meeting.id.clone(),
                    index: i + 1,
                });
            }
            let gap = cur.start - prev.end;
            if cur.speaker == prev.speaker {
                if gap < 0.0 {
                    clamped += 1;
                }
                same_spk.add(gap.max(0.0));
            } else if gap > 0.0 {
                diff_spk.add(gap);
            } else {
                overlap.add(-gap);
            }
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(MixerError::NoPairs);
    }
    if clamped > 0 {
        tracing::warn!(
            count = clamped,
            "negative same-speaker gaps clamped to zero"
        );
    }
    let denom = diff_spk.total() + overlap.total();
    let p_ovl = if denom == 0 {
        tracing::warn!("no different-speaker pairs; overlap probability stored as 0");
        0.0
    } else {
        overlap.total() as f64 / denom as f64
    };
    Ok(PauseStats {
        bin_width,
        same_spk,
        diff_spk,
        overlap,
        p_ovl,
    })
}

/// Samples the signed gap to place after a turn change.
///
/// Same-speaker changes draw from `same_spk`. Different-speaker changes
/// first draw a Bernoulli with `p_ovl`: on success the gap is the negated
/// `overlap` sample, otherwise a `diff_spk` sample. Advances `rng`
/// deterministically (Bernoulli first, then the histogram draw).
pub fn sample_gap<R: Rng>(
    stats: &PauseStats,
    prev_speaker: &str,
    next_speaker: &str,
    rng: &mut R,
) -> Result<f64, MixerError> {
    if prev_speaker == next_speaker {
        stats.same_spk.sample("same_spk", rng)
    } else if rng.gen_bool(stats.p_ovl) {
        Ok(-stats.overlap.sample("overlap", rng)?)
    } else {
        stats.diff_spk.sample("diff_spk", rng)
    }
}

/// Knobs for mixture generation and audio rendering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Maximum distinct speakers per mixture (K).
    pub max_speakers: usize,
    /// Maximum summed segment duration per speaker per mixture in seconds (T).
    pub max_speaker_dur: f64,
    /// Output channels for the overlap-splitting channel assignment.
    pub num_channels: usize,
    /// Directory of room impulse response WAVs; one drawn per speaker per
    /// mixture when set.
    pub rir_dir: Option<PathBuf>,
    /// Directory of noise WAVs; one drawn per mixture when set.
    pub noise_dir: Option<PathBuf>,
    /// Signal-to-noise ratio in dB for the noise stage.
    pub noise_snr_db: f64,
    /// Integrated-loudness target range in dB; the target is drawn uniformly
    /// and applied as a scalar gain.
    pub loudness_db: Option<(f64, f64)>,
    /// Root seed for generation; per-mixture render seeds derive from it.
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_speakers: 3,
            max_speaker_dur: 15.0,
            num_channels: 2,
            rir_dir: None,
            noise_dir: None,
            noise_snr_db: DEFAULT_NOISE_SNR_DB,
            loudness_db: None,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), MixerError> {
        let fail = |reason: String| Err(MixerError::InvalidConfig { reason });
        if self.max_speakers < 1 {
            return fail("max_speakers must be >= 1".into());
        }
        if !self.max_speaker_dur.is_finite() || self.max_speaker_dur <= 0.0 {
            return fail(format!(
                "max_speaker_dur must be positive, got {}",
                self.max_speaker_dur
            ));
        }
        if self.num_channels < 2 {
            return fail(format!(
                "num_channels must be >= 2, got {}",
                self.num_channels
            ));
        }
        if !self.noise_snr_db.is_finite() {
            return fail(format!("noise_snr_db must be finite, got {}", self.noise_snr_db));
        }
        if let Some((lo, hi)) = self.loudness_db {
            if !lo.is_finite() || !hi.is_finite() || lo > hi || hi >= 0.0 {
                return fail(format!(
                    "loudness range ({lo}, {hi}) must be finite, ordered, and negative"
                ));
            }
        }
        Ok(())
    }
}

/// One placed segment of a mixture: the source segment plus its offset in
/// the mixture timeline. The segment's own start/end stay in the source
/// recording's timeline and locate the samples to cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixEntry {
    pub segment: Segment,
    pub offset: f64,
}

impl MixEntry {
    /// End of this entry in the mixture timeline.
    pub fn end(&self) -> f64 {
        self.offset + self.segment.duration()
    }
}

/// A simulated mixture: placed segments ordered by offset plus the seed for
/// its audio rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub id: String,
    pub seed: u64,
    pub entries: Vec<MixEntry>,
}

impl MixtureSpec {
    /// Distinct speakers, sorted.
    pub fn speakers(&self) -> Vec<&str> {
        let set: std::collections::BTreeSet<&str> = self
            .entries
            .iter()
            .map(|e| e.segment.speaker.as_str())
            .collect();
        set.into_iter().collect()
    }

    /// End of the last-finishing entry in seconds.
    pub fn duration(&self) -> f64 {
        self.entries.iter().map(MixEntry::end).fold(0.0, f64::max)
    }

    /// Views the mixture as a meeting in the mixture timeline: each entry
    /// becomes a segment spanning `[offset, offset + duration)`. Word
    /// timings and audio references are dropped; they stay in the source
    /// timeline and do not transfer.
    pub fn to_meeting(&self) -> Meeting {
        let segments = self
            .entries
            .iter()
            .map(|e| Segment {
                id: e.segment.id.clone(),
                speaker: e.segment.speaker.clone(),
                start: e.offset,
                end: e.end(),
                text: e.segment.text.clone(),
                words: None,
                audio: None,
            })
            .collect();
        let mut meeting = Meeting {
            id: self.id.clone(),
            segments,
        };
        meeting.sort_segments();
        meeting
    }
}

/// Simulates mixtures from a pool of single-speaker segments.
///
/// Segments are bucketed by speaker; segments longer than the per-speaker
/// budget are skipped with a warning. Each round draws `k` speakers
/// uniformly from the non-empty buckets (`1 <= k <= min(max_speakers,
/// non-empty)`), then per speaker removes random segments from the bucket
/// until the next one would exceed `max_speaker_dur` summed seconds. The
/// union is shuffled and offsets accumulate: the first entry starts at 0 and
/// each next entry starts at the previous entry's end plus a sampled gap,
/// clamped so offsets never decrease or go negative. Rounds repeat until
/// every bucket is empty, so each segment is used at most once across all
/// mixtures. The same `(segments, stats, config)` yields byte-identical
/// output.
pub fn generate_mixtures(
    segments: &[Segment],
    stats: &PauseStats,
    config: &GenerationConfig,
) -> Result<Vec<MixtureSpec>, MixerError> {
    config.validate()?;
    let budget = config.max_speaker_dur;
    let mut buckets: BTreeMap<&str, Vec<&Segment>> = BTreeMap::new();
    let mut skipped = 0u64;
    for segment in segments {
        if segment.duration() > budget {
            skipped += 1;
            continue;
        }
        buckets
            .entry(segment.speaker.as_str())
            .or_default()
            .push(segment);
    }
    if skipped > 0 {
        tracing::warn!(
            count = skipped,
            budget,
            "segments longer than the per-speaker budget were skipped"
        );
    }
    if buckets.is_empty() {
        return Err(MixerError::NoUsableSegments);
    }
    let speakers: Vec<&str> = buckets.keys().copied().collect();
    let mut rng = SeedRng::new(config.seed);
    let mut specs = Vec::new();
    loop {
        let mut nonempty: Vec<&str> = speakers
            .iter()
            .copied()
            .filter(|s| !buckets[s].is_empty())
            .collect();
        if nonempty.is_empty() {
            break;
        }
        let k = rng.gen_range(1..=config.max_speakers.min(nonempty.len()));
        let (chosen, _) = nonempty.partial_shuffle(&mut rng, k);
        let mut picked: Vec<&Segment> = Vec::new();
        for speaker in chosen.iter() {
            let bucket = buckets.get_mut(speaker).expect("chosen from keys");
            let mut used = 0.0;
            while !bucket.is_empty() {
                let i = rng.gen_range(0..bucket.len());
                let duration = bucket[i].duration();
                if used + duration > budget {
                    break;
                }
                used += duration;
                picked.push(bucket.swap_remove(i));
            }
        }
        picked.shuffle(&mut rng);
        let mut entries: Vec<MixEntry> = Vec::with_capacity(picked.len());
        for segment in picked {
            let offset = match entries.last() {
                None => 0.0,
                Some(prev) => {
                    let gap =
                        sample_gap(stats, &prev.segment.speaker, &segment.speaker, &mut rng)?;
                    (prev.end() + gap).max(prev.offset).max(0.0)
                }
            };
            entries.push(MixEntry {
                segment: segment.clone(),
                offset,
            });
        }
        let index = specs.len() as u64;
        specs.push(MixtureSpec {
            id: format!("mix-{index:06}"),
            seed: derive_seed(config.seed, index),
            entries,
        });
    }
    Ok(specs)
}
