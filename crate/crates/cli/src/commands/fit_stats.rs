//! `mtasr fit-stats`: fit pause/overlap gap statistics from meetings.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use mtasr_core::corpus;
use mtasr_core::mixer::{self, DEFAULT_BIN_WIDTH};

use crate::{output, provenance};

#[derive(Debug, Args)]
pub struct FitStatsArgs {
    /// Input meeting manifest (JSONL, one meeting per line).
    #[arg(long)]
    pub meetings: PathBuf,

    /// Histogram bin width in seconds; 0 keeps exact gap values
    /// (point-mass bins).
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
    pub bin_width: f64,

    /// Output statistics path (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &FitStatsArgs) -> anyhow::Result<()> {
    let meetings = corpus::load_manifest(&args.meetings)
        .with_context(|| format!("loading {}", args.meetings.display()))?;
    let stats = mixer::fit_stats(&meetings, args.bin_width)?;
    tracing::info!(
        meetings = meetings.len(),
        p_ovl = stats.p_ovl,
        "fitted gap statistics"
    );

    let header = provenance::provenance(None, &[&args.meetings])?;
    let value = serde_json::to_value(&stats).context("serializing statistics")?;
    output::write_json_with_provenance(&args.out, &header, value)
}
