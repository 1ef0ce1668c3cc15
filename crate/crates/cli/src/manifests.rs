//! Session manifests that may hold plain meetings or mixture specs.
//!
//! `simulate` writes mixture specs (`{"id", "seed", "entries"}`) while the
//! corpus tools write meetings (`{"id", "segments"}`). Commands that score
//! or assign channels accept either shape per line; mixture specs are
//! materialized into meetings (offset-shifted segments in start order).

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::Context;
use mtasr_core::corpus::Meeting;
use mtasr_core::mixer::MixtureSpec;
use serde::Deserialize;

/// The two shapes share no required fields, so untagged deserialization is
/// unambiguous.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MixtureOrMeeting {
    Spec(MixtureSpec),
    Meeting(Meeting),
}

/// Loads a JSONL session manifest, skipping the provenance header line.
/// Every session is validated (finite sorted intervals, unique ids).
pub fn load_sessions(path: &Path) -> anyhow::Result<Vec<Meeting>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;

    let mut meetings = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: invalid JSON", path.display(), lineno + 1))?;
        if value.get("provenance").is_some() && value.get("id").is_none() {
            continue;
        }
        let parsed: MixtureOrMeeting = serde_json::from_value(value).with_context(|| {
            format!(
                "{}:{}: expected a mixture spec or meeting",
                path.display(),
                lineno + 1
            )
        })?;
        let mut meeting = match parsed {
            MixtureOrMeeting::Spec(spec) => spec.to_meeting(),
            MixtureOrMeeting::Meeting(meeting) => meeting,
        };
        meeting.sort_segments();
        meeting
            .validate()
            .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        if !seen.insert(meeting.id.clone()) {
            anyhow::bail!("duplicate session id {}", meeting.id);
        }
        meetings.push(meeting);
    }
    if meetings.is_empty() {
        anyhow::bail!("{} contains no sessions", path.display());
    }
    Ok(meetings)
}
