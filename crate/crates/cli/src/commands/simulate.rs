//! `mtasr simulate`: generate mixture specs, optionally rendering audio.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use mtasr_core::corpus::{self, Segment};
use mtasr_core::mixer::{
    self, GenerationConfig, MixtureSpec, PauseStats, DEFAULT_NOISE_SNR_DB,
};
use mtasr_core::rng::SeedRng;
use rayon::prelude::*;

use crate::{output, provenance};

/// Loudness range in LUFS parsed from `MIN:MAX`, e.g. `-25:-20`.
#[derive(Debug, Clone, Copy)]
pub struct LoudnessRange {
    pub min: f64,
    pub max: f64,
}

fn parse_loudness(raw: &str) -> Result<LoudnessRange, String> {
    let (lo, hi) = raw
        .split_once(':')
        .ok_or_else(|| format!("expected MIN:MAX (e.g. -25:-20), got {raw:?}"))?;
    let min: f64 = lo
        .trim()
        .parse()
        .map_err(|_| format!("invalid loudness {lo:?}"))?;
    let max: f64 = hi
        .trim()
        .parse()
        .map_err(|_| format!("invalid loudness {hi:?}"))?;
    Ok(LoudnessRange { min, max })
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Segment pool manifest (JSONL of meetings; all segments are pooled).
    #[arg(long)]
    pub segments: PathBuf,

    /// Gap statistics produced by `fit-stats` (JSON).
    #[arg(long)]
    pub stats: PathBuf,

    /// Maximum simultaneous speakers per mixture (K).
    #[arg(long, default_value_t = 3)]
    pub max_speakers: usize,

    /// Per-speaker duration budget in seconds (T).
    #[arg(long, default_value_t = 15.0)]
    pub max_speaker_dur: f64,

    /// Output mixture manifest path (JSONL).
    #[arg(long)]
    pub out: PathBuf,

    /// Also render audio into `<out-stem>_audio/` next to the manifest.
    #[arg(long)]
    pub audio: bool,

    /// Number of output channels for the rendered per-channel sources.
    #[arg(long, default_value_t = 2)]
    pub channels: usize,

    /// Directory of room impulse response WAVs; each speaker in a mixture
    /// is convolved with one RIR drawn from this directory.
    #[arg(long)]
    pub rir_dir: Option<PathBuf>,

    /// Directory of background noise WAVs mixed in at --noise-snr.
    #[arg(long)]
    pub noise_dir: Option<PathBuf>,

    /// Signal-to-noise ratio in dB used when --noise-dir is given.
    #[arg(long, default_value_t = DEFAULT_NOISE_SNR_DB, allow_hyphen_values = true)]
    pub noise_snr: f64,

    /// Target integrated loudness range `MIN:MAX` in dB (e.g. -25:-20);
    /// each rendered mixture is scaled to a level drawn from this range.
    #[arg(long, value_parser = parse_loudness, allow_hyphen_values = true)]
    pub loudness: Option<LoudnessRange>,
}

pub fn run(args: &SimulateArgs, seed: u64) -> anyhow::Result<()> {
    let meetings = corpus::load_manifest(&args.segments)
        .with_context(|| format!("loading {}", args.segments.display()))?;
    let segments: Vec<Segment> = meetings
        .into_iter()
        .flat_map(|m| m.segments.into_iter())
        .collect();

    let stats_bytes = std::fs::read(&args.stats)
        .with_context(|| format!("reading {}", args.stats.display()))?;
    let stats: PauseStats = serde_json::from_slice(&stats_bytes)
        .with_context(|| format!("parsing {}", args.stats.display()))?;

    let config = GenerationConfig {
        max_speakers: args.max_speakers,
        max_speaker_dur: args.max_speaker_dur,
        num_channels: args.channels,
        rir_dir: args.rir_dir.clone(),
        noise_dir: args.noise_dir.clone(),
        noise_snr_db: args.noise_snr,
        loudness_db: args.loudness.map(|range| (range.min, range.max)),
        seed,
    };

    let specs = mixer::generate_mixtures(&segments, &stats, &config)?;
    tracing::info!(
        mixtures = specs.len(),
        segments = segments.len(),
        "generated mixture specs"
    );

    let header = provenance::provenance(Some(seed), &[&args.segments, &args.stats])?;
    output::write_jsonl(&args.out, &header, &specs)?;

    if args.audio {
        render_all(&specs, &config, &args.out)?;
    }
    Ok(())
}

/// Renders every mixture into `<out-stem>_audio/` as `{id}.wav` plus one
/// `{id}.source{c}.wav` per channel. Mixtures render in parallel; each uses
/// its own stream seeded from its mixture spec's recorded seed, so the
/// output is independent of worker count.
fn render_all(specs: &[MixtureSpec], config: &GenerationConfig, out: &Path) -> anyhow::Result<()> {
    let dir = audio_dir_for(out);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating audio directory {}", dir.display()))?;

    specs
        .par_iter()
        .map(|spec| -> anyhow::Result<()> {
            let mut rng = SeedRng::new(spec.seed);
            let rendered = mixer::render_audio(spec, config, &mut rng)
                .with_context(|| format!("rendering {}", spec.id))?;
            write_wav_atomic(
                &dir.join(format!("{}.wav", spec.id)),
                &rendered.mixture,
                rendered.sample_rate,
            )?;
            for (channel, source) in rendered.channel_sources.iter().enumerate() {
                write_wav_atomic(
                    &dir.join(format!("{}.source{}.wav", spec.id, channel)),
                    source,
                    rendered.sample_rate,
                )?;
            }
            Ok(())
        })
        .collect::<Result<Vec<()>, _>>()?;
    tracing::info!(mixtures = specs.len(), dir = %dir.display(), "rendered audio");
    Ok(())
}

/// `MIX.jsonl` renders into the sibling directory `MIX_audio/`.
fn audio_dir_for(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mixtures".to_owned());
    out.with_file_name(format!("{stem}_audio"))
}

/// Writes a 32-bit float WAV via temp file + rename in the target directory.
fn write_wav_atomic(path: &Path, samples: &[f64], sample_rate: u32) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    let tmp = tempfile::Builder::new()
        .suffix(".wav")
        .tempfile_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    mixer::write_wav_f32(tmp.path(), samples, sample_rate)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("moving temp file into {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loudness_range_parses_negative_bounds() {
        let range = parse_loudness("-25:-20").unwrap();
        assert_eq!(range.min, -25.0);
        assert_eq!(range.max, -20.0);
    }

    #[test]
    fn loudness_range_rejects_garbage() {
        assert!(parse_loudness("-25").is_err());
        assert!(parse_loudness("a:b").is_err());
    }

    #[test]
    fn audio_dir_sits_next_to_manifest() {
        assert_eq!(
            audio_dir_for(Path::new("/tmp/run/MIX.jsonl")),
            PathBuf::from("/tmp/run/MIX_audio")
        );
        assert_eq!(audio_dir_for(Path::new("MIX.jsonl")), PathBuf::from("MIX_audio"));
    }
}
