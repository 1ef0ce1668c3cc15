//! Non-neural machinery for multi-talker streaming speech recognition:
//! overlapped-mixture simulation from pause/overlap statistics, first-fit
//! channel references for overlapped utterances, exact transducer/CTC lattice
//! losses with analytic gradients, and assignment-based WER metrics.
//!
//! Modules:
//! - [`corpus`]: manifest I/O, tokenization, pause-based sub-segmentation
//! - [`heat`]: utterance-to-channel routing and per-channel references
//! - [`mixer`]: pause statistics, mixture generation, audio rendering
//! - [`lattice`]: transducer/CTC losses, pruning bounds, occupancy
//! - [`metrics`]: edit stats, assignment WER variants, n-gram diagnostics
//! - [`rng`]: seeded splittable randomness

pub mod corpus;
pub mod heat;
pub mod lattice;
pub mod metrics;
pub mod mixer;
#[doc(hidden)]
pub mod oracles;
pub mod rng;
