//! `mtasr score`: score hypothesis channels against reference meetings.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use mtasr_core::corpus::{tokenize, Meeting, TokenSequence};
use mtasr_core::metrics::{self, EditStats, NGramDiagnostics};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use crate::{manifests, output, provenance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    /// Best assignment of reference utterances to hypothesis channels.
    Orc,
    /// Best speaker-to-channel permutation over concatenated streams.
    Cpwer,
    /// Plain WER of everything concatenated, no assignment search.
    Wer,
}

impl Metric {
    fn name(self) -> &'static str {
        match self {
            Metric::Orc => "orc",
            Metric::Cpwer => "cpwer",
            Metric::Wer => "wer",
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Reference manifest (JSONL): meetings or mixture specs.
    #[arg(long)]
    pub refs: PathBuf,

    /// Hypothesis file (JSONL): {"id": str, "channels": [[token,...],...]}.
    #[arg(long)]
    pub hyps: PathBuf,

    /// Which error rate to compute.
    #[arg(long, value_enum, default_value_t = Metric::Orc)]
    pub metric: Metric,

    /// Also report n-gram leakage/omission diagnostics at this order.
    #[arg(long)]
    pub ngram: Option<usize>,

    /// Output report path (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

/// One hypothesis line: per-channel token sequences for a session.
#[derive(Debug, Deserialize)]
struct HypLine {
    id: String,
    channels: Vec<TokenSequence>,
}

/// Everything measured for one session, before report assembly.
struct SessionScore {
    id: String,
    stats: EditStats,
    assignment: serde_json::Value,
    ngram: Option<NGramDiagnostics>,
}

pub fn run(args: &ScoreArgs) -> anyhow::Result<()> {
    let meetings = manifests::load_sessions(&args.refs)?;
    let hyps = load_hypotheses(&args.hyps)?;

    // Strict join on session id: a reference without a hypothesis (or the
    // reverse) is a validation error, not a silent skip.
    let mut unused: BTreeMap<&str, &HypLine> =
        hyps.iter().map(|h| (h.id.as_str(), h)).collect();
    let mut pairs = Vec::with_capacity(meetings.len());
    for meeting in &meetings {
        let hyp = unused
            .remove(meeting.id.as_str())
            .ok_or_else(|| anyhow::anyhow!("no hypothesis for session {}", meeting.id))?;
        pairs.push((meeting, hyp));
    }
    if let Some((id, _)) = unused.into_iter().next() {
        anyhow::bail!("hypothesis {id} matches no reference session");
    }

    let metric = args.metric;
    let ngram = args.ngram;
    let sessions: Vec<SessionScore> = pairs
        .par_iter()
        .map(|(meeting, hyp)| score_session(meeting, hyp, metric, ngram))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let report = build_report(&sessions, metric, ngram);
    tracing::info!(sessions = sessions.len(), metric = metric.name(), "scored");

    let header = provenance::provenance(None, &[&args.refs, &args.hyps])?;
    output::write_json_with_provenance(&args.out, &header, report)
}

fn load_hypotheses(path: &PathBuf) -> anyhow::Result<Vec<HypLine>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut hyps = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
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
        let hyp: HypLine = serde_json::from_value(value).with_context(|| {
            format!(
                "{}:{}: expected {{\"id\", \"channels\"}}",
                path.display(),
                lineno + 1
            )
        })?;
        if !seen.insert(hyp.id.clone()) {
            anyhow::bail!("duplicate hypothesis id {}", hyp.id);
        }
        hyps.push(hyp);
    }
    if hyps.is_empty() {
        anyhow::bail!("{} contains no hypotheses", path.display());
    }
    Ok(hyps)
}

fn score_session(
    meeting: &Meeting,
    hyp: &HypLine,
    metric: Metric,
    ngram: Option<usize>,
) -> anyhow::Result<SessionScore> {
    // Reference utterances in start order, one token sequence each.
    let utterances: Vec<TokenSequence> = meeting
        .segments
        .iter()
        .map(|segment| tokenize(&segment.text))
        .collect();

    let (stats, assignment) = match metric {
        Metric::Orc => {
            let result = metrics::orc_wer(&utterances, &hyp.channels)
                .with_context(|| format!("session {}", meeting.id))?;
            (result.stats, json!(result.assignment))
        }
        Metric::Cpwer => {
            // Group reference tokens per speaker, concatenated in start order.
            let mut by_speaker: BTreeMap<&str, TokenSequence> = BTreeMap::new();
            for (segment, tokens) in meeting.segments.iter().zip(&utterances) {
                by_speaker
                    .entry(segment.speaker.as_str())
                    .or_default()
                    .extend(tokens);
            }
            let speakers: Vec<&str> = by_speaker.keys().copied().collect();
            let groups: Vec<TokenSequence> = by_speaker.values().cloned().collect();
            let result = metrics::cp_wer_detailed(&groups, &hyp.channels)
                .with_context(|| format!("session {}", meeting.id))?;
            let mapping: serde_json::Map<String, serde_json::Value> = speakers
                .iter()
                .zip(&result.channel_of_speaker)
                .map(|(speaker, channel)| ((*speaker).to_owned(), json!(channel)))
                .collect();
            (result.stats, serde_json::Value::Object(mapping))
        }
        Metric::Wer => {
            // Everything concatenated: references in start order, hypothesis
            // channels in channel order.
            let mut reference = TokenSequence::default();
            for tokens in &utterances {
                reference.extend(tokens);
            }
            let mut hypothesis = TokenSequence::default();
            for channel in &hyp.channels {
                hypothesis.extend(channel);
            }
            let stats = metrics::edit_stats(reference.tokens(), hypothesis.tokens());
            (stats, serde_json::Value::Null)
        }
    };

    let ngram = match ngram {
        Some(n) => Some(
            metrics::ngram_diagnostics(&utterances, &hyp.channels, n)
                .with_context(|| format!("session {}", meeting.id))?,
        ),
        None => None,
    };

    Ok(SessionScore {
        id: meeting.id.clone(),
        stats,
        assignment,
        ngram,
    })
}

fn build_report(
    sessions: &[SessionScore],
    metric: Metric,
    ngram: Option<usize>,
) -> serde_json::Value {
    let mut session_values = Vec::with_capacity(sessions.len());
    let mut total = EditStats::default();
    let (mut leaked, mut omitted, mut unique) = (0usize, 0usize, 0usize);

    for session in sessions {
        total.accumulate(&session.stats);
        let mut entry = stats_object(&session.stats);
        entry.insert("id".to_owned(), json!(session.id));
        entry.insert("assignment".to_owned(), session.assignment.clone());
        if let Some(diag) = &session.ngram {
            leaked += diag.leaked;
            omitted += diag.omitted;
            unique += diag.total_unique;
            entry.insert(format!("leakage@{}", diag.n), json!(diag.leakage));
            entry.insert(format!("omission@{}", diag.n), json!(diag.omission));
        }
        session_values.push(serde_json::Value::Object(entry));
    }

    let mut aggregate = stats_object(&total);
    if let Some(n) = ngram {
        let rate = |count: usize| {
            if unique == 0 {
                0.0
            } else {
                count as f64 / unique as f64
            }
        };
        aggregate.insert(format!("leakage@{n}"), json!(rate(leaked)));
        aggregate.insert(format!("omission@{n}"), json!(rate(omitted)));
    }

    let mut report = serde_json::Map::new();
    report.insert("metric".to_owned(), json!(metric.name()));
    if let Some(n) = ngram {
        report.insert("ngram".to_owned(), json!(n));
    }
    report.insert("sessions".to_owned(), json!(session_values));
    report.insert(
        "aggregate".to_owned(),
        serde_json::Value::Object(aggregate),
    );
    serde_json::Value::Object(report)
}

fn stats_object(stats: &EditStats) -> serde_json::Map<String, serde_json::Value> {
    let mut map = serde_json::Map::new();
    map.insert("wer".to_owned(), json!(stats.wer()));
    map.insert("ins".to_owned(), json!(stats.ins));
    map.insert("del".to_owned(), json!(stats.del));
    map.insert("sub".to_owned(), json!(stats.sub));
    map.insert("ref_len".to_owned(), json!(stats.ref_len));
    map
}
