//! WAV input/output, convolution, and mixture audio rendering.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use rand::Rng;

use super::{integrated_loudness, loudness_gain, GenerationConfig, MixerError, MixtureSpec};
use crate::corpus::Segment;
use crate::heat;

/// Rendered waveforms for one mixture.
pub struct RenderedMixture {
    pub sample_rate: u32,
    /// The mixed signal: shifted (optionally reverberated) sources plus
    /// noise, after any loudness gain.
    pub mixture: Vec<f64>,
    /// Per-channel sums of the clean (anechoic, noise-free) shifted sources,
    /// scaled by the same loudness gain as the mixture. Without
    /// reverberation and noise the channels sum to the mixture, up to float
    /// rounding.
    pub channel_sources: Vec<Vec<f64>>,
    /// Output channel of each entry, aligned with `spec.entries`.
    pub channel_of: Vec<usize>,
    /// Loudness target drawn for this mixture, if loudness was configured.
    pub target_loudness: Option<f64>,
}

/// Reads one channel of a WAV file as f64 samples in `[-1, 1]`, along with
/// the sample rate. Integer formats are scaled by their full-scale value;
/// 32-bit float files are read as-is.
pub fn read_wav_channel(path: &Path, channel: u32) -> Result<(Vec<f64>, u32), MixerError> {
    let mut reader = WavReader::open(path).map_err(|source| MixerError::Wav {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = reader.spec();
    if channel >= u32::from(spec.channels) {
        return Err(MixerError::ChannelOutOfRange {
            path: path.to_path_buf(),
            channel,
            channels: spec.channels,
        });
    }
    let wav_err = |source| MixerError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Int, bits) if bits <= 32 => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
        (format, bits) => {
            return Err(MixerError::UnsupportedFormat {
                path: path.to_path_buf(),
                detail: format!("{format:?} at {bits} bits"),
            })
        }
    };
    let stride = spec.channels as usize;
    let samples = interleaved
        .into_iter()
        .skip(channel as usize)
        .step_by(stride)
        .collect();
    Ok((samples, spec.sample_rate))
}

fn writer_spec(sample_rate: u32, bits: u16, format: SampleFormat) -> WavSpec {
    WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: bits,
        sample_format: format,
    }
}

/// Writes mono samples as a 32-bit float WAV.
pub fn write_wav_f32(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), MixerError> {
    let wav_err = |source| MixerError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = WavWriter::create(path, writer_spec(sample_rate, 32, SampleFormat::Float))
        .map_err(wav_err)?;
    for &v in samples {
        writer.write_sample(v as f32).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

/// Writes mono samples as a 16-bit PCM WAV, clamping to `[-1, 1]`.
pub fn write_wav_i16(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), MixerError> {
    let wav_err = |source| MixerError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut writer =
        WavWriter::create(path, writer_spec(sample_rate, 16, SampleFormat::Int)).map_err(wav_err)?;
    for &v in samples {
        let scaled = (v.clamp(-1.0, 1.0) * f64::from(i16::MAX)).round() as i16;
        writer.write_sample(scaled).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)
}

/// Direct time-domain convolution; output length `x.len() + h.len() - 1`.
/// Empty inputs produce an empty output.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (j, &hj) in h.iter().enumerate() {
            y[i + j] += xi * hj;
        }
    }
    y
}

fn list_wav_files(dir: &Path) -> Result<Vec<PathBuf>, MixerError> {
    let io_err = |source| MixerError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err)?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("wav"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(MixerError::EmptyDir {
            dir: dir.to_path_buf(),
        });
    }
    Ok(files)
}

fn add_at(dst: &mut [f64], offset: usize, src: &[f64]) {
    for (d, s) in dst[offset..].iter_mut().zip(src) {
        *d += s;
    }
}

fn mean_power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64
}

/// Routes each entry to an output channel using the first-fit assignment on
/// the mixture-timeline intervals. Returned vector is aligned with
/// `spec.entries`.
fn assign_channels(spec: &MixtureSpec, num_channels: usize) -> Result<Vec<usize>, MixerError> {
    let mut order: Vec<usize> = (0..spec.entries.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&spec.entries[a], &spec.entries[b]);
        ea.offset
            .total_cmp(&eb.offset)
            .then(ea.end().total_cmp(&eb.end()))
            .then(ea.segment.id.cmp(&eb.segment.id))
    });
    let sorted: Vec<Segment> = order
        .iter()
        .map(|&i| {
            let e = &spec.entries[i];
            Segment {
                id: e.segment.id.clone(),
                speaker: e.segment.speaker.clone(),
                start: e.offset,
                end: e.end(),
                text: e.segment.text.clone(),
                words: None,
                audio: None,
            }
        })
        .collect();
    let assignment = heat::assign(&sorted, num_channels)?;
    let mut channel_of = vec![0usize; spec.entries.len()];
    for (pos, &entry_idx) in order.iter().enumerate() {
        channel_of[entry_idx] = assignment.channel_of[pos];
    }
    Ok(channel_of)
}

/// Renders one mixture to audio.
///
/// Each entry's source samples are cut from its WAV (the segment's start/end
/// locate the cut in the source timeline), optionally convolved with a room
/// impulse response drawn per speaker, shifted to the entry offset, and
/// summed. When a noise directory is set, one noise file is drawn, tiled to
/// the mixture length, and added at `noise_snr_db`. When a loudness range is
/// set, a target is drawn uniformly and the corresponding scalar gain is
/// applied to the mixture and the channel sources alike.
///
/// The rng is consumed in a fixed order: one impulse-response draw per
/// speaker in sorted speaker order, then the noise draw, then the loudness
/// target. Rendering the same spec with an equally seeded rng reproduces the
/// output exactly; distinct mixtures can render in parallel.
pub fn render_audio<R: Rng>(
    spec: &MixtureSpec,
    config: &GenerationConfig,
    rng: &mut R,
) -> Result<RenderedMixture, MixerError> {
    config.validate()?;
    if spec.entries.is_empty() {
        return Err(MixerError::EmptyMixture {
            id: spec.id.clone(),
        });
    }

    let mut sample_rate: Option<u32> = None;
    let mut clean: Vec<Vec<f64>> = Vec::with_capacity(spec.entries.len());
    for entry in &spec.entries {
        let audio = entry
            .segment
            .audio
            .as_ref()
            .ok_or_else(|| MixerError::MissingAudio {
                segment: entry.segment.id.clone(),
            })?;
        let (samples, fs) = read_wav_channel(&audio.path, audio.channel)?;
        match sample_rate {
            None => sample_rate = Some(fs),
            Some(expected) if expected != fs => {
                return Err(MixerError::SampleRateMismatch {
                    path: audio.path.clone(),
                    expected,
                    got: fs,
                })
            }
            Some(_) => {}
        }
        let fs_f = f64::from(fs);
        let s0 = ((entry.segment.start * fs_f).round() as usize).min(samples.len());
        let s1 = ((entry.segment.end * fs_f).round() as usize).clamp(s0, samples.len());
        clean.push(samples[s0..s1].to_vec());
    }
    let fs = sample_rate.expect("entries checked non-empty");
    let fs_f = f64::from(fs);

    let mut rirs: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    if let Some(dir) = &config.rir_dir {
        let files = list_wav_files(dir)?;
        for speaker in spec.speakers() {
            let pick = rng.gen_range(0..files.len());
            let (rir, rir_fs) = read_wav_channel(&files[pick], 0)?;
            if rir_fs != fs {
                return Err(MixerError::SampleRateMismatch {
                    path: files[pick].clone(),
                    expected: fs,
                    got: rir_fs,
                });
            }
            rirs.insert(speaker, rir);
        }
    }

    let offsets: Vec<usize> = spec
        .entries
        .iter()
        .map(|e| (e.offset * fs_f).round() as usize)
        .collect();
    let wet: Vec<Vec<f64>> = clean
        .iter()
        .zip(&spec.entries)
        .map(|(x, entry)| match rirs.get(entry.segment.speaker.as_str()) {
            Some(h) if !h.is_empty() && !x.is_empty() => convolve(x, h),
            _ => x.clone(),
        })
        .collect();
    let total = offsets
        .iter()
        .zip(&wet)
        .map(|(o, w)| o + w.len())
        .max()
        .unwrap_or(0);

    let mut mixture = vec![0.0; total];
    for (offset, signal) in offsets.iter().zip(&wet) {
        add_at(&mut mixture, *offset, signal);
    }

    let channel_of = assign_channels(spec, config.num_channels)?;
    let mut channel_sources = vec![vec![0.0; total]; config.num_channels];
    for ((offset, signal), &c) in offsets.iter().zip(&clean).zip(&channel_of) {
        add_at(&mut channel_sources[c], *offset, signal);
    }

    if let Some(dir) = &config.noise_dir {
        let files = list_wav_files(dir)?;
        let pick = rng.gen_range(0..files.len());
        let (noise, noise_fs) = read_wav_channel(&files[pick], 0)?;
        if noise_fs != fs {
            return Err(MixerError::SampleRateMismatch {
                path: files[pick].clone(),
                expected: fs,
                got: noise_fs,
            });
        }
        let tiled: Vec<f64> = (0..total).map(|i| noise[i % noise.len()]).collect();
        let signal_power = mean_power(&mixture);
        let noise_power = mean_power(&tiled);
        if signal_power > 0.0 && noise_power > 0.0 {
            let gain =
                (signal_power / (noise_power * 10f64.powf(config.noise_snr_db / 10.0))).sqrt();
            for (m, n) in mixture.iter_mut().zip(&tiled) {
                *m += gain * n;
            }
        } else {
            tracing::warn!(mixture = %spec.id, "silent mixture or noise; noise stage skipped");
        }
    }

    let mut target_loudness = None;
    if let Some((lo, hi)) = config.loudness_db {
        let target = rng.gen_range(lo..=hi);
        target_loudness = Some(target);
        match integrated_loudness(&mixture, fs) {
            Some(measured) => {
                let gain = loudness_gain(measured, target);
                for v in &mut mixture {
                    *v *= gain;
                }
                for channel in &mut channel_sources {
                    for v in channel {
                        *v *= gain;
                    }
                }
            }
            None => {
                tracing::warn!(mixture = %spec.id, "loudness not measurable; gain skipped");
            }
        }
    }

    Ok(RenderedMixture {
        sample_rate: fs,
        mixture,
        channel_sources,
        channel_of,
        target_loudness,
    })
}
