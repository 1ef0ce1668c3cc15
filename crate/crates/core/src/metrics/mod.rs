//! Word error metrics for multi-channel hypotheses: plain edit statistics,
//! channel-agnostic WER over utterance-to-channel assignments, speaker-paired
//! WER, and n-gram leakage/omission diagnostics.

mod cpwer;
mod edit;
mod ngram;
mod orc;

pub use cpwer::{cp_wer, cp_wer_detailed, CpWerResult};
pub use edit::{edit_stats, levenshtein_distance, EditStats};
pub use ngram::{ngram_diagnostics, NGramDiagnostics};
pub use orc::{orc_wer, orc_wer_bruteforce, orc_wer_with_limit, OrcResult, DEFAULT_MAX_STATES};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("at least one hypothesis channel is required")]
    NoChannels,
    #[error("assignment lattice needs {states} states, limit is {limit}")]
    StateSpaceTooLarge { states: u128, limit: usize },
    #[error("exhaustive search over {count} utterances exceeds the limit of {limit}")]
    TooManyUtterances { count: usize, limit: usize },
    #[error("pairing supports at most {limit} speakers/channels, got {count}")]
    TooManyGroups { count: usize, limit: usize },
    #[error("n-gram order must be at least 1")]
    InvalidNgramOrder,
    #[error("hypothesis channel count {got} exceeds {limit}")]
    TooManyChannels { got: usize, limit: usize },
}
