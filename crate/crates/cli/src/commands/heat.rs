//! `mtasr heat`: first-fit channel assignment and per-channel references.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use mtasr_core::corpus::TokenSequence;
use mtasr_core::heat;
use serde::Serialize;

use crate::{manifests, output, provenance};

#[derive(Debug, Args)]
pub struct HeatArgs {
    /// Mixture manifest (JSONL): either mixture specs from `simulate` or
    /// plain meetings.
    #[arg(long)]
    pub mixtures: PathBuf,

    /// Number of output channels.
    #[arg(long, default_value_t = 2)]
    pub channels: usize,

    /// Output reference path (JSONL).
    #[arg(long)]
    pub out: PathBuf,
}

/// One line of the reference file: token sequences per channel, the channel
/// index assigned to each utterance (in start order), and the indices of
/// utterances that could not be placed without overlap.
#[derive(Debug, Serialize)]
struct ReferenceLine {
    id: String,
    channels: Vec<TokenSequence>,
    assignment: Vec<usize>,
    conflicts: Vec<usize>,
}

pub fn run(args: &HeatArgs) -> anyhow::Result<()> {
    if args.channels < 2 {
        anyhow::bail!("--channels must be at least 2");
    }
    let sessions = manifests::load_sessions(&args.mixtures)?;

    let mut lines = Vec::with_capacity(sessions.len());
    let mut conflicted = 0usize;
    for meeting in sessions {
        let assignment = heat::assign(&meeting.segments, args.channels)
            .with_context(|| format!("assigning channels for {}", meeting.id))?;
        let references = heat::build_references(&meeting.segments, &assignment)
            .with_context(|| format!("building references for {}", meeting.id))?;
        if !assignment.conflicts.is_empty() {
            conflicted += 1;
            tracing::warn!(
                id = %meeting.id,
                conflicts = assignment.conflicts.len(),
                "utterances overlapped an already-busy channel"
            );
        }
        lines.push(ReferenceLine {
            id: meeting.id,
            channels: references.per_channel,
            assignment: assignment.channel_of,
            conflicts: assignment.conflicts,
        });
    }
    tracing::info!(mixtures = lines.len(), conflicted, "assigned channels");

    let header = provenance::provenance(None, &[&args.mixtures])?;
    output::write_jsonl(&args.out, &header, &lines)
}
