//! `mtasr subsegment`: split utterances at long word gaps.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use mtasr_core::corpus::{self, Meeting};

use crate::{output, provenance};

#[derive(Debug, Args)]
pub struct SubsegmentArgs {
    /// Input meeting manifest (JSONL, one meeting per line).
    #[arg(long)]
    pub manifest: PathBuf,

    /// Silence threshold in seconds: segments are split at word gaps
    /// strictly longer than this.
    #[arg(long)]
    pub tau: f64,

    /// Output manifest path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &SubsegmentArgs) -> anyhow::Result<()> {
    if !args.tau.is_finite() || args.tau < 0.0 {
        anyhow::bail!("--tau must be a finite, non-negative number of seconds");
    }
    let meetings = corpus::load_manifest(&args.manifest)
        .with_context(|| format!("loading {}", args.manifest.display()))?;

    let mut out_meetings = Vec::with_capacity(meetings.len());
    let mut passed_through = 0usize;
    let mut produced = 0usize;
    for meeting in &meetings {
        let mut segments = Vec::with_capacity(meeting.segments.len());
        for segment in &meeting.segments {
            match &segment.words {
                Some(words) if !words.is_empty() => {
                    let pieces = corpus::subsegment(segment, args.tau)
                        .with_context(|| format!("splitting segment {}", segment.id))?;
                    produced += pieces.len();
                    segments.extend(pieces);
                }
                _ => {
                    passed_through += 1;
                    produced += 1;
                    segments.push(segment.clone());
                }
            }
        }
        let mut meeting = Meeting {
            id: meeting.id.clone(),
            segments,
        };
        meeting.sort_segments();
        out_meetings.push(meeting);
    }
    if passed_through > 0 {
        tracing::warn!(
            count = passed_through,
            "segments without word timings were passed through unchanged"
        );
    }
    tracing::info!(
        meetings = out_meetings.len(),
        segments = produced,
        "subsegmented manifest"
    );

    let header = provenance::provenance(None, &[&args.manifest])?;
    let mut buf = Vec::new();
    output::push_provenance_line(&mut buf, &header)?;
    corpus::write_manifest(&mut buf, &out_meetings).context("serializing manifest")?;
    output::atomic_write(&args.out, &buf)
}
