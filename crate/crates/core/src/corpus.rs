//! Meeting manifests: typed segments with optional word alignments and audio
//! sources, JSONL load/store, whitespace tokenization, and pause-based
//! sub-segmentation.
//!
//! A manifest is one JSON object per line: `{"id", "segments": [...]}`. A line
//! whose object carries a top-level `"provenance"` key is metadata written by
//! the CLI and is skipped on load.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("segment {id}: {reason}")]
    InvalidSegment { id: String, reason: String },
    #[error("meeting {meeting}: duplicate segment id {id}")]
    DuplicateSegmentId { meeting: String, id: String },
    #[error("duplicate meeting id {id}")]
    DuplicateMeetingId { id: String },
    #[error("segment {id} has no word alignment")]
    MissingWords { id: String },
    #[error("split threshold must be non-negative, got {tau}")]
    InvalidTau { tau: f64 },
    #[error("token must be non-empty and contain no whitespace, got {token:?}")]
    InvalidToken { token: String },
}

/// One aligned word: token plus its time interval. Serialized as
/// `[token, start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(String, f64, f64)", into = "(String, f64, f64)")]
pub struct Word {
    pub token: String,
    pub start: f64,
    pub end: f64,
}

impl From<(String, f64, f64)> for Word {
    fn from((token, start, end): (String, f64, f64)) -> Self {
        Word { token, start, end }
    }
}

impl From<Word> for (String, f64, f64) {
    fn from(w: Word) -> Self {
        (w.token, w.start, w.end)
    }
}

/// Source audio for a segment: a file plus the channel index within it.
/// Segment times index into this file's timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioSource {
    pub path: PathBuf,
    pub channel: u32,
}

/// One utterance: speaker, time interval, transcript, and optionally a word
/// alignment and an audio source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub speaker: String,
    pub start: f64,
    pub end: f64,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<Word>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<AudioSource>,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Checks the segment invariants: finite times with `0 <= start < end`,
    /// and when a word alignment is present, ordered non-overlapping word
    /// intervals contained in `[start, end]` whose tokens reproduce `text`
    /// up to whitespace.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |reason: String| CorpusError::InvalidSegment {
            id: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(fail("empty id".into()));
        }
        if !self.start.is_finite() || !self.end.is_finite() {
            return Err(fail(format!(
                "non-finite interval [{}, {}]",
                self.start, self.end
            )));
        }
        if self.start < 0.0 || self.start >= self.end {
            return Err(fail(format!(
                "interval [{}, {}] must satisfy 0 <= start < end",
                self.start, self.end
            )));
        }
        if let Some(words) = &self.words {
            let mut prev_end = self.start;
            for w in words {
                if w.token.is_empty() || w.token.chars().any(char::is_whitespace) {
                    return Err(fail(format!("bad word token {:?}", w.token)));
                }
                if !w.start.is_finite() || !w.end.is_finite() || w.start > w.end {
                    return Err(fail(format!(
                        "bad word interval [{}, {}]",
                        w.start, w.end
                    )));
                }
                if w.start < prev_end - 1e-9 {
                    return Err(fail(format!(
                        "word at {} overlaps or precedes previous word end {}",
                        w.start, prev_end
                    )));
                }
                if w.end > self.end + 1e-9 {
                    return Err(fail(format!(
                        "word interval [{}, {}] exceeds segment end {}",
                        w.start, w.end, self.end
                    )));
                }
                prev_end = w.end;
            }
            let joined: Vec<&str> = words.iter().map(|w| w.token.as_str()).collect();
            let from_text: Vec<&str> = self.text.split_whitespace().collect();
            if joined != from_text {
                return Err(fail("word tokens do not reproduce text".into()));
            }
        }
        Ok(())
    }
}

/// A recording session: unique id plus its segments sorted by start time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meeting {
    pub id: String,
    pub segments: Vec<Segment>,
}

impl Meeting {
    /// Checks meeting invariants: valid segments, unique segment ids, and
    /// segments sorted by start time.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut seen = HashSet::new();
        for seg in &self.segments {
            seg.validate()?;
            if !seen.insert(seg.id.as_str()) {
                return Err(CorpusError::DuplicateSegmentId {
                    meeting: self.id.clone(),
                    id: seg.id.clone(),
                });
            }
        }
        for pair in self.segments.windows(2) {
            if pair[1].start < pair[0].start {
                return Err(CorpusError::InvalidSegment {
                    id: pair[1].id.clone(),
                    reason: "segments not sorted by start".into(),
                });
            }
        }
        Ok(())
    }

    /// Sorts segments by `(start, end, id)`, the order the rest of the
    /// crate assumes.
    pub fn sort_segments(&mut self) {
        self.segments.sort_by(|a, b| {
            a.start
                .total_cmp(&b.start)
                .then(a.end.total_cmp(&b.end))
                .then(a.id.cmp(&b.id))
        });
    }
}

/// A sequence of tokens; every token is non-empty and free of whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> Result<Self, CorpusError> {
        for t in &tokens {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(CorpusError::InvalidToken { token: t.clone() });
            }
        }
        Ok(TokenSequence(tokens))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    /// Appends all tokens of `other`.
    pub fn extend(&mut self, other: &TokenSequence) {
        self.0.extend(other.0.iter().cloned());
    }
}

impl TryFrom<Vec<String>> for TokenSequence {
    type Error = CorpusError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        TokenSequence::new(tokens)
    }
}

impl From<TokenSequence> for Vec<String> {
    fn from(seq: TokenSequence) -> Self {
        seq.0
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// Splits text on Unicode whitespace. No normalization or case folding is
/// applied; tokens are compared exactly everywhere downstream.
pub fn tokenize(text: &str) -> TokenSequence {
    TokenSequence(text.split_whitespace().map(str::to_owned).collect())
}

#[derive(Deserialize)]
struct ProvenanceLine {
    #[allow(dead_code)]
    provenance: serde_json::Value,
}

/// Loads a JSONL manifest. Provenance lines and blank lines are skipped,
/// segments are sorted by start time, and all invariants are checked.
/// Parse failures report the 1-based line number; invariant violations name
/// the offending id.
pub fn load_manifest(path: &Path) -> Result<Vec<Meeting>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    load_manifest_reader(BufReader::new(file), path)
}

/// Same as [`load_manifest`] but from any reader; `origin` is used only in
/// error messages.
pub fn load_manifest_reader<R: Read>(
    reader: BufReader<R>,
    origin: &Path,
) -> Result<Vec<Meeting>, CorpusError> {
    let mut meetings = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: origin.to_owned(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        if serde_json::from_str::<ProvenanceLine>(&line).is_ok() {
            continue;
        }
        let mut meeting: Meeting =
            serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
        meeting.sort_segments();
        meeting.validate()?;
        if !seen.insert(meeting.id.clone()) {
            return Err(CorpusError::DuplicateMeetingId { id: meeting.id });
        }
        meetings.push(meeting);
    }
    Ok(meetings)
}

/// Writes meetings as JSONL, one compact object per line.
pub fn write_manifest<W: Write>(writer: &mut W, meetings: &[Meeting]) -> std::io::Result<()> {
    for m in meetings {
        let line = serde_json::to_string(m).expect("meeting serialization cannot fail");
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Splits a segment at word gaps strictly longer than `tau` seconds.
///
/// Requires a non-empty word alignment. Each piece covers a maximal run of
/// words with inter-word gaps `<= tau`; its interval is tightened to the
/// first word's start and last word's end, its text is the covered tokens
/// joined by single spaces, and its id is `{parent}-{k}`. When no gap
/// exceeds `tau` the segment is returned unchanged.
pub fn subsegment(segment: &Segment, tau: f64) -> Result<Vec<Segment>, CorpusError> {
    if tau.is_nan() || tau < 0.0 {
        return Err(CorpusError::InvalidTau { tau });
    }
    let words = match &segment.words {
        Some(w) if !w.is_empty() => w,
        _ => {
            return Err(CorpusError::MissingWords {
                id: segment.id.clone(),
            })
        }
    };
    let mut splits = vec![0usize];
    for i in 1..words.len() {
        if words[i].start - words[i - 1].end > tau {
            splits.push(i);
        }
    }
    if splits.len() == 1 {
        return Ok(vec![segment.clone()]);
    }
    splits.push(words.len());
    let pieces = splits
        .windows(2)
        .enumerate()
        .map(|(k, range)| {
            let chunk = &words[range[0]..range[1]];
            let text = chunk
                .iter()
                .map(|w| w.token.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            Segment {
                id: format!("{}-{}", segment.id, k),
                speaker: segment.speaker.clone(),
                start: chunk[0].start,
                end: chunk[chunk.len() - 1].end,
                text,
                words: Some(chunk.to_vec()),
                audio: segment.audio.clone(),
            }
        })
        .collect();
    Ok(pieces)
}
