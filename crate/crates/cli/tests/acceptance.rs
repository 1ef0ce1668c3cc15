//! Acceptance gate: one test per verifiable contract of the toolkit, each
//! printing a single `acceptance N (<label>): PASS` line on success (run with
//! `cargo test --test acceptance -- --nocapture` to see them).
//!
//! The contracts:
//!  1. the assignment-WER dynamic program equals exhaustive search
//!  2. assignment WER never exceeds speaker-permutation WER
//!  3. transducer full-sum loss equals path enumeration
//!  4. analytic gradients match central finite differences
//!  5. windowed loss reduces to the full loss, never beats it, and widening
//!     a window never increases it
//!  6. CTC loss equals alignment enumeration, including infeasible cases
//!  7. lattice occupancies conserve label and frame mass
//!  8. first-fit channel routing is conflict-free at overlap depth <= 2
//!  9. mixture generation round-trips its pause/overlap statistics
//! 10. rendered mixtures land in the requested loudness range
//! 11. simulation and scoring are byte-deterministic under a fixed seed
//! 12. n-gram leakage/omission worked examples and partition identity

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use mtasr_core::corpus::{AudioSource, Meeting, Segment, TokenSequence};
use mtasr_core::heat;
use mtasr_core::lattice::{
    ctc_loss, mask_loss, occupancy, prune_bounds, pruned_rnnt_loss, rnnt_loss, trivial_join,
    FrameLogits, LatticeError, LogitsTensor, Matrix, PruneBounds, WindowLogits,
};
use mtasr_core::metrics::{
    cp_wer_detailed, edit_stats, ngram_diagnostics, orc_wer, orc_wer_bruteforce, EditStats,
};
use mtasr_core::mixer::{
    fit_stats, generate_mixtures, integrated_loudness, render_audio, GenerationConfig, Histogram,
    MixtureSpec, PauseStats,
};
use mtasr_core::oracles::{
    ctc_loss_by_enumeration, finite_difference_grad, max_scaled_error, random_frame_logits,
    random_labels, random_logits, random_raw_values, random_trivial_joiner,
    rnnt_loss_by_enumeration,
};
use mtasr_core::rng::SeedRng;
use rand::Rng;

const FD_STEP: f64 = 1e-5;
const GRAD_TOLERANCE: f64 = 1e-4;

fn pass(number: usize, label: &str) {
    println!("acceptance {number} ({label}): PASS");
}

const TOKENS: [&str; 5] = ["a", "b", "c", "d", "e"];

fn random_sequence(
    rng: &mut SeedRng,
    min_len: usize,
    max_len: usize,
    vocab: usize,
) -> TokenSequence {
    let len = rng.gen_range(min_len..=max_len);
    let tokens = (0..len)
        .map(|_| TOKENS[rng.gen_range(0..vocab)].to_owned())
        .collect();
    TokenSequence::new(tokens).expect("fixed alphabet tokens are valid")
}

fn seq(text: &str) -> TokenSequence {
    TokenSequence::new(text.split_whitespace().map(str::to_owned).collect())
        .expect("literal tokens are valid")
}

fn seg(id: &str, speaker: &str, start: f64, end: f64) -> Segment {
    Segment {
        id: id.to_owned(),
        speaker: speaker.to_owned(),
        start,
        end,
        text: format!("word-{id}"),
        words: None,
        audio: None,
    }
}

/// 1. The channel-assignment WER dynamic program agrees exactly with
/// exhaustive search over all utterance-to-channel assignments, and its
/// reported assignment reproduces its reported cost.
#[test]
fn acceptance_01_assignment_wer_matches_bruteforce() {
    let started = Instant::now();
    let mut rng = SeedRng::new(0xACC0_0001);
    for trial in 0..10_000 {
        let vocab = rng.gen_range(1..=TOKENS.len());
        let utterances = rng.gen_range(0..=6);
        let channels = rng.gen_range(2..=3);
        let refs: Vec<TokenSequence> = (0..utterances)
            .map(|_| random_sequence(&mut rng, 1, 4, vocab))
            .collect();
        let hyps: Vec<TokenSequence> = (0..channels)
            .map(|_| random_sequence(&mut rng, 0, 6, vocab))
            .collect();

        let fast = orc_wer(&refs, &hyps).expect("instance within size limits");
        let brute = orc_wer_bruteforce(&refs, &hyps).expect("instance small enough to enumerate");
        // The metric is the minimum total edit count over assignments. Several
        // assignments can attain that minimum with different ins/del/sub
        // decompositions, and the two searches break such ties differently, so
        // the comparison is on the metric value (and the shared denominator),
        // not on one tie-broken decomposition.
        assert_eq!(
            fast.stats.total_errors(),
            brute.stats.total_errors(),
            "trial {trial}: dp {:?} vs brute force {:?}\nrefs {refs:?}\nhyps {hyps:?}",
            fast.stats, brute.stats
        );
        assert_eq!(
            fast.stats.ref_len, brute.stats.ref_len,
            "trial {trial}: reference length must not depend on the search"
        );

        // The assignment must itself cost what the result claims.
        assert_eq!(fast.assignment.len(), refs.len());
        let mut grouped = vec![TokenSequence::default(); hyps.len()];
        for (reference, &channel) in refs.iter().zip(&fast.assignment) {
            grouped[channel].extend(reference);
        }
        let mut recount = EditStats::default();
        for (concatenated, hyp) in grouped.iter().zip(&hyps) {
            recount.accumulate(&edit_stats(concatenated.tokens(), hyp.tokens()));
        }
        assert_eq!(recount, fast.stats, "trial {trial}: assignment does not reproduce the cost");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "10000 instances took {elapsed:?}, budget is 60 s");
    pass(1, "assignment WER equals brute force on 10000 instances");
}

/// 2. Freeing the utterance-to-channel assignment can only help: the
/// assignment WER never exceeds the speaker-permutation WER computed from
/// the same tokens grouped by speaker.
#[test]
fn acceptance_02_assignment_wer_lower_bounds_speaker_permutation_wer() {
    let mut rng = SeedRng::new(0xACC0_0002);
    for trial in 0..1_000 {
        let vocab = rng.gen_range(2..=TOKENS.len());
        let utterances = rng.gen_range(1..=6);
        let channels = rng.gen_range(2..=3);
        let speaker_pool = rng.gen_range(1..=3);
        let speaker_of: Vec<usize> = (0..utterances)
            .map(|_| rng.gen_range(0..speaker_pool))
            .collect();
        let refs: Vec<TokenSequence> = (0..utterances)
            .map(|_| random_sequence(&mut rng, 1, 4, vocab))
            .collect();
        let hyps: Vec<TokenSequence> = (0..channels)
            .map(|_| random_sequence(&mut rng, 0, 8, vocab))
            .collect();

        let orc = orc_wer(&refs, &hyps).expect("instance within size limits");
        let mut by_speaker: BTreeMap<usize, TokenSequence> = BTreeMap::new();
        for (&speaker, reference) in speaker_of.iter().zip(&refs) {
            by_speaker.entry(speaker).or_default().extend(reference);
        }
        let groups: Vec<TokenSequence> = by_speaker.into_values().collect();
        let cp = cp_wer_detailed(&groups, &hyps).expect("few speaker groups");

        assert_eq!(
            orc.stats.ref_len, cp.stats.ref_len,
            "trial {trial}: both metrics see the same reference tokens"
        );
        assert!(
            orc.stats.total_errors() <= cp.stats.total_errors(),
            "trial {trial}: assignment WER {} exceeds speaker-permutation WER {}\nrefs {refs:?} speakers {speaker_of:?}\nhyps {hyps:?}",
            orc.stats.total_errors(),
            cp.stats.total_errors()
        );
    }
    pass(2, "assignment WER <= speaker-permutation WER on 1000 instances");
}

/// 3. The transducer full-sum recursion equals explicit enumeration of every
/// monotone alignment path.
#[test]
fn acceptance_03_transducer_loss_matches_path_enumeration() {
    let mut rng = SeedRng::new(0xACC0_0003);
    for trial in 0..200 {
        let frames = rng.gen_range(1..=5);
        let label_count = rng.gen_range(0..=4);
        let vocab = rng.gen_range(2..=6);
        let blank = rng.gen_range(0..vocab);
        let logits = random_logits(&mut rng, frames, label_count, vocab, blank);
        let labels = random_labels(&mut rng, label_count, vocab, blank);

        let loss = rnnt_loss(&logits, &labels).expect("valid lattice").loss;
        let oracle = rnnt_loss_by_enumeration(&logits, &labels);
        assert!(
            (loss - oracle).abs() <= 1e-9,
            "trial {trial} (T={frames} U={label_count} V={vocab}): {loss} vs enumeration {oracle}"
        );
    }
    pass(3, "transducer loss matches path enumeration on 200 tensors");
}

/// The normalized per-node values of a dense lattice tensor, in the same
/// T x (U+1) x V layout the constructors and gradients use. Losses are
/// shift-invariant per node, so finite differences taken at this point match
/// the analytic gradient with respect to the original raw logits.
fn dense_values(tensor: &LogitsTensor) -> Vec<f64> {
    let mut values = Vec::with_capacity(tensor.frames() * (tensor.labels() + 1) * tensor.vocab());
    for t in 0..tensor.frames() {
        for u in 0..=tensor.labels() {
            for v in 0..tensor.vocab() {
                values.push(tensor.log_prob(t, u, v));
            }
        }
    }
    values
}

fn frame_values(logits: &FrameLogits) -> Vec<f64> {
    (0..logits.frames())
        .flat_map(|t| logits.row(t).iter().copied())
        .collect()
}

/// 4. Analytic gradients of all four losses match central finite
/// differences within a relative error of 1e-4, over 100 seeded instances
/// per loss.
#[test]
fn acceptance_04_analytic_gradients_match_finite_differences() {
    let mut rng = SeedRng::new(0xACC0_0004);

    let mut worst_rnnt = 0.0_f64;
    for _ in 0..100 {
        let frames = rng.gen_range(1..=4);
        let label_count = rng.gen_range(0..=3);
        let vocab = rng.gen_range(2..=4);
        let blank = rng.gen_range(0..vocab);
        let tensor = random_logits(&mut rng, frames, label_count, vocab, blank);
        let labels = random_labels(&mut rng, label_count, vocab, blank);

        let analytic = rnnt_loss(&tensor, &labels).expect("valid lattice").grad;
        let mut params = dense_values(&tensor);
        let numeric = finite_difference_grad(
            &mut params,
            |values| {
                let probe =
                    LogitsTensor::from_raw(frames, label_count, vocab, blank, values.to_vec())
                        .expect("same shape");
                rnnt_loss(&probe, &labels).expect("valid lattice").loss
            },
            FD_STEP,
        );
        worst_rnnt = worst_rnnt.max(max_scaled_error(&analytic, &numeric));
    }
    assert!(worst_rnnt <= GRAD_TOLERANCE, "transducer gradient error {worst_rnnt}");

    let mut worst_pruned = 0.0_f64;
    for _ in 0..100 {
        let frames = rng.gen_range(2..=4);
        let label_count = rng.gen_range(1..=3);
        let vocab = rng.gen_range(2..=4);
        let blank = rng.gen_range(0..vocab);
        let input = random_trivial_joiner(&mut rng, frames, label_count, vocab, blank);
        let labels = random_labels(&mut rng, label_count, vocab, blank);
        // Smallest window that still admits a complete path.
        let feasible_floor = (label_count + frames - 1) / frames + 1;
        let window = rng.gen_range(feasible_floor..=label_count + 1);
        let bounds = prune_bounds(&input, &labels, window).expect("window is feasible");
        let logits = WindowLogits::from_trivial(&input, bounds).expect("matching shapes");

        let analytic = pruned_rnnt_loss(&logits, &labels).expect("valid window").grad;
        let fixed_bounds = logits.bounds().clone();
        let mut params = logits.values().to_vec();
        let numeric = finite_difference_grad(
            &mut params,
            |values| {
                let probe =
                    WindowLogits::from_raw(fixed_bounds.clone(), vocab, blank, values.to_vec())
                        .expect("same shape");
                pruned_rnnt_loss(&probe, &labels).expect("valid window").loss
            },
            FD_STEP,
        );
        worst_pruned = worst_pruned.max(max_scaled_error(&analytic, &numeric));
    }
    assert!(worst_pruned <= GRAD_TOLERANCE, "windowed gradient error {worst_pruned}");

    let mut worst_ctc = 0.0_f64;
    for _ in 0..100 {
        let label_count = rng.gen_range(0..=3);
        // Enough frames for any label sequence of this length, repeats
        // included, so every instance is feasible and differentiable.
        let frames = rng.gen_range((2 * label_count).max(1)..=8);
        let vocab = rng.gen_range(2..=4);
        let blank = rng.gen_range(0..vocab);
        let logits = random_frame_logits(&mut rng, frames, vocab, blank);
        let labels = random_labels(&mut rng, label_count, vocab, blank);

        let output = ctc_loss(&logits, &labels).expect("valid inputs");
        assert!(output.feasible, "generator must produce feasible instances");
        let mut params = frame_values(&logits);
        let numeric = finite_difference_grad(
            &mut params,
            |values| {
                let probe = FrameLogits::from_raw(frames, vocab, blank, values.to_vec())
                    .expect("same shape");
                ctc_loss(&probe, &labels).expect("valid inputs").loss
            },
            FD_STEP,
        );
        worst_ctc = worst_ctc.max(max_scaled_error(&output.grad, &numeric));
    }
    assert!(worst_ctc <= GRAD_TOLERANCE, "ctc gradient error {worst_ctc}");

    let mut worst_mask = 0.0_f64;
    for _ in 0..100 {
        let channels = rng.gen_range(1..=3);
        let rows = rng.gen_range(1..=4);
        let cols = rng.gen_range(1..=5);
        let random_matrix = |rng: &mut SeedRng| {
            Matrix::new(rows, cols, random_raw_values(rng, rows * cols)).expect("matching size")
        };
        let estimates: Vec<Matrix> = (0..channels).map(|_| random_matrix(&mut rng)).collect();
        let targets: Vec<Matrix> = (0..channels).map(|_| random_matrix(&mut rng)).collect();

        let output = mask_loss(&estimates, &targets).expect("matching shapes");
        let analytic: Vec<f64> = output
            .grad
            .iter()
            .flat_map(|m| m.data().iter().copied())
            .collect();
        let mut params: Vec<f64> = estimates
            .iter()
            .flat_map(|m| m.data().iter().copied())
            .collect();
        let numeric = finite_difference_grad(
            &mut params,
            |values| {
                let probes: Vec<Matrix> = values
                    .chunks(rows * cols)
                    .map(|chunk| Matrix::new(rows, cols, chunk.to_vec()).expect("same shape"))
                    .collect();
                mask_loss(&probes, &targets).expect("matching shapes").loss
            },
            FD_STEP,
        );
        worst_mask = worst_mask.max(max_scaled_error(&analytic, &numeric));
    }
    assert!(worst_mask <= GRAD_TOLERANCE, "mask gradient error {worst_mask}");

    pass(
        4,
        "gradients match finite differences (transducer/windowed/ctc/mask, 100 instances each)",
    );
}

/// 5. With the widest window (S = U+1) the windowed loss equals the full
/// loss to 1e-10; every window's loss is at least the full loss (removing
/// lattice cells can only remove path mass); and widening any given window
/// by one slot per step never increases the loss.
///
/// The last clause is deliberately about *nested* windows. The window
/// selector places each frame's window by an occupancy argmax, so windows
/// chosen at different sizes need not contain each other, and the loss is
/// not monotone across independently re-selected sizes: with T=3, U=4 the
/// selector can prefer frame positions at S=4 that cover less joint path
/// mass than its S=3 choice (observed 8.404 at S=3 vs 8.594 at S=4 under
/// this test's own generator). Monotonicity is a property of growing a
/// window, not of re-picking it, and that is what is asserted here; the
/// re-selection caveat is also documented on the selector itself.
#[test]
fn acceptance_05_windowed_loss_is_consistent_with_full_loss() {
    let mut rng = SeedRng::new(0xACC0_0005);
    for trial in 0..100 {
        let frames = rng.gen_range(1..=4);
        let label_count = rng.gen_range(0..=4);
        let vocab = rng.gen_range(2..=5);
        let blank = rng.gen_range(0..vocab);
        let input = random_trivial_joiner(&mut rng, frames, label_count, vocab, blank);
        let labels = random_labels(&mut rng, label_count, vocab, blank);
        let dense = trivial_join(&input).expect("valid joiner input");
        let full = rnnt_loss(&dense, &labels).expect("valid lattice").loss;
        let slots = label_count + 1;

        let mut narrowest: Option<PruneBounds> = None;
        let mut widest = f64::NAN;
        for window in 1..=slots {
            let bounds = match prune_bounds(&input, &labels, window) {
                Ok(bounds) => bounds,
                Err(LatticeError::WindowTooSmall { .. }) => continue,
                Err(other) => panic!("trial {trial}: unexpected error {other}"),
            };
            if narrowest.is_none() {
                narrowest = Some(bounds.clone());
            }
            let logits = WindowLogits::from_trivial(&input, bounds).expect("matching shapes");
            let loss = pruned_rnnt_loss(&logits, &labels).expect("valid window").loss;
            assert!(
                loss >= full - 1e-9,
                "trial {trial}: window {window} loss {loss} beat the full loss {full}"
            );
            widest = loss;
        }
        assert!(
            (widest - full).abs() <= 1e-10,
            "trial {trial}: widest window {widest} vs full loss {full}"
        );

        // Grow the narrowest selected window one slot at a time until it spans
        // the lattice. Each step keeps every cell of the previous region (the
        // start can drop by at most one slot while the width grows by one), so
        // the covered path set only grows and the loss must not increase.
        let base = narrowest.expect("the widest window is always feasible");
        let mut previous = f64::INFINITY;
        for extra in 0..=slots - base.window() {
            let window = base.window() + extra;
            let cap = slots - window;
            let lo: Vec<usize> = (0..base.frames()).map(|t| base.lo(t).min(cap)).collect();
            let bounds =
                PruneBounds::new(lo, window, label_count).expect("widening preserves validity");
            let logits = WindowLogits::from_trivial(&input, bounds).expect("matching shapes");
            let loss = pruned_rnnt_loss(&logits, &labels).expect("valid window").loss;
            assert!(
                loss <= previous + 1e-9,
                "trial {trial}: loss grew from {previous} to {loss} when widening to {window}"
            );
            previous = loss;
        }
        assert!(
            (previous - full).abs() <= 1e-10,
            "trial {trial}: fully widened window {previous} vs full loss {full}"
        );
    }
    pass(5, "windowed loss equals full loss at S=U+1 and never increases as a window widens");
}

/// 6. CTC equals enumeration of every length-T alignment, and infeasible
/// instances (T too short for the labels) are infinite on both sides.
#[test]
fn acceptance_06_ctc_loss_matches_alignment_enumeration() {
    let mut rng = SeedRng::new(0xACC0_0006);
    let mut feasible_seen = 0usize;
    let mut infeasible_seen = 0usize;
    for trial in 0..200 {
        let frames = rng.gen_range(1..=6);
        let vocab = rng.gen_range(2..=5);
        let blank = rng.gen_range(0..vocab);
        let label_count = rng.gen_range(0..=4);
        let logits = random_frame_logits(&mut rng, frames, vocab, blank);
        let labels = random_labels(&mut rng, label_count, vocab, blank);

        let output = ctc_loss(&logits, &labels).expect("valid inputs");
        let oracle = ctc_loss_by_enumeration(&logits, &labels);
        if output.feasible {
            feasible_seen += 1;
            assert!(
                (output.loss - oracle).abs() <= 1e-9,
                "trial {trial} (T={frames} V={vocab} U={label_count}): {} vs enumeration {oracle}",
                output.loss
            );
        } else {
            infeasible_seen += 1;
            assert!(
                output.loss.is_infinite() && oracle.is_infinite(),
                "trial {trial}: infeasible instance must be infinite on both sides ({} vs {oracle})",
                output.loss
            );
        }
    }
    assert!(feasible_seen > 0 && infeasible_seen > 0, "both regimes must be exercised");
    pass(6, "ctc loss matches alignment enumeration on 200 instances");
}

/// 7. Occupancies conserve mass: emit probabilities sum to U, blank
/// probabilities to T, and the lattice endpoints are visited with
/// probability one.
#[test]
fn acceptance_07_occupancy_conserves_label_and_frame_mass() {
    let mut rng = SeedRng::new(0xACC0_0007);
    for trial in 0..100 {
        let frames = rng.gen_range(1..=5);
        let label_count = rng.gen_range(0..=4);
        let vocab = rng.gen_range(2..=5);
        let blank = rng.gen_range(0..vocab);
        let logits = random_logits(&mut rng, frames, label_count, vocab, blank);
        let labels = random_labels(&mut rng, label_count, vocab, blank);

        let grid = occupancy(&logits, &labels).expect("valid lattice");
        let emit_total: f64 = grid.emit.iter().sum();
        let blank_total: f64 = grid.blank.iter().sum();
        assert!(
            (emit_total - label_count as f64).abs() <= 1e-8,
            "trial {trial}: emit mass {emit_total} != U={label_count}"
        );
        assert!(
            (blank_total - frames as f64).abs() <= 1e-8,
            "trial {trial}: blank mass {blank_total} != T={frames}"
        );
        assert!(
            (grid.node(0, 0) - 1.0).abs() <= 1e-8,
            "trial {trial}: start occupancy {}",
            grid.node(0, 0)
        );
        assert!(
            (grid.node(frames - 1, label_count) - 1.0).abs() <= 1e-8,
            "trial {trial}: end occupancy {}",
            grid.node(frames - 1, label_count)
        );
    }
    pass(7, "occupancy sums to U emits and T blanks with pinned endpoints");
}

/// Random session whose overlap depth never exceeds two: each utterance may
/// overlap its immediate predecessor but starts only after everything
/// earlier has ended.
fn random_depth_two_session(rng: &mut SeedRng) -> Vec<Segment> {
    let count = rng.gen_range(1..=12);
    let mut segments: Vec<Segment> = Vec::with_capacity(count);
    let mut start = rng.gen_range(0.0..1.0);
    for i in 0..count {
        if i > 0 {
            start += rng.gen_range(0.05..2.0);
            let must_wait_for: f64 = segments[..i - 1]
                .iter()
                .map(|s| s.end)
                .fold(f64::NEG_INFINITY, f64::max);
            if start < must_wait_for {
                start = must_wait_for + rng.gen_range(0.0..0.5);
            }
        }
        let end = start + rng.gen_range(0.5..3.0);
        segments.push(seg(&format!("u{i}"), &format!("spk{}", i % 4), start, end));
    }
    segments
}

/// 8. With overlap depth <= 2 and two channels, first-fit routing yields no
/// conflicts and each channel's utterances are pairwise disjoint; the
/// three-utterance worked example routes to channels (0, 1, 0).
#[test]
fn acceptance_08_channel_routing_is_conflict_free_at_depth_two() {
    let worked = vec![
        seg("u0", "a", 0.0, 5.0),
        seg("u1", "b", 3.0, 8.0),
        seg("u2", "c", 6.0, 10.0),
    ];
    let assignment = heat::assign(&worked, 2).expect("sorted example");
    assert_eq!(assignment.channel_of, vec![0, 1, 0]);
    assert!(assignment.conflicts.is_empty());

    let mut rng = SeedRng::new(0xACC0_0008);
    for trial in 0..10_000 {
        let session = random_depth_two_session(&mut rng);
        let assignment = heat::assign(&session, 2).expect("generator emits sorted sessions");
        assert!(
            assignment.conflicts.is_empty(),
            "trial {trial}: conflicts {:?} in {session:?}",
            assignment.conflicts
        );
        let mut channel_end = vec![f64::NEG_INFINITY; 2];
        for (utterance, &channel) in session.iter().zip(&assignment.channel_of) {
            assert!(channel < 2, "trial {trial}: channel {channel} out of range");
            assert!(
                utterance.start >= channel_end[channel],
                "trial {trial}: utterance {} starts at {} before channel {channel} is free at {}",
                utterance.id,
                utterance.start,
                channel_end[channel]
            );
            channel_end[channel] = utterance.end;
        }
    }
    pass(8, "channel routing has zero conflicts on 10000 depth-2 sessions");
}

/// Hand-written pause/overlap statistics used by the simulation round-trip
/// and loudness tests. Every histogram value stays strictly inside its
/// designed range: overlaps (0.2..0.4 s) are shorter than the shortest
/// segment, so no placement ever clamps, and gaps are strictly positive, so
/// every refit pair classifies unambiguously.
fn designed_stats() -> PauseStats {
    let bin_width = 0.1;
    PauseStats {
        bin_width,
        same_spk: Histogram::from_bins(bin_width, vec![(0.2, 30), (0.5, 40), (0.8, 30)])
            .expect("valid bins"),
        diff_spk: Histogram::from_bins(bin_width, vec![(0.3, 50), (0.7, 30), (1.1, 20)])
            .expect("valid bins"),
        overlap: Histogram::from_bins(bin_width, vec![(0.2, 60), (0.3, 40)]).expect("valid bins"),
        p_ovl: 0.35,
    }
}

/// 9. Mixtures generated from fixed statistics obey the speaker-count and
/// per-speaker duration budgets exactly, and re-fitting statistics on the
/// generated mixtures recovers the originals: overlap probability within
/// +-0.05 and earth-mover distance within two bin widths per histogram.
#[test]
fn acceptance_09_simulation_round_trips_pause_statistics() {
    let stats = designed_stats();
    let mut rng = SeedRng::new(0xACC0_0009);
    let mut pool = Vec::with_capacity(160_000);
    for speaker in 0..40 {
        for i in 0..4_000 {
            let duration = rng.gen_range(1.0..2.0);
            pool.push(seg(
                &format!("s{speaker:02}-{i:04}"),
                &format!("spk{speaker:02}"),
                0.0,
                duration,
            ));
        }
    }
    let max_speakers = 3;
    let max_speaker_dur = 6.0;
    let config = GenerationConfig {
        max_speakers,
        max_speaker_dur,
        seed: 0x5EED_0009,
        ..GenerationConfig::default()
    };
    let specs = generate_mixtures(&pool, &stats, &config).expect("valid pool and stats");
    assert!(specs.len() >= 10_000, "only {} mixtures generated", specs.len());

    for spec in &specs {
        assert!(
            spec.speakers().len() <= max_speakers,
            "{}: {} speakers exceed the budget",
            spec.id,
            spec.speakers().len()
        );
        let mut per_speaker: BTreeMap<&str, f64> = BTreeMap::new();
        for entry in &spec.entries {
            *per_speaker.entry(entry.segment.speaker.as_str()).or_default() +=
                entry.segment.duration();
        }
        for (speaker, total) in per_speaker {
            // The generator compares against the budget while accumulating;
            // re-summing in a different order may differ by float rounding.
            assert!(
                total <= max_speaker_dur + 1e-9,
                "{}: speaker {speaker} has {total} s, budget {max_speaker_dur}",
                spec.id
            );
        }
    }

    let meetings: Vec<Meeting> = specs.iter().map(MixtureSpec::to_meeting).collect();
    let refit = fit_stats(&meetings, stats.bin_width).expect("mixtures have transitions");
    assert!(
        (refit.p_ovl - stats.p_ovl).abs() <= 0.05,
        "overlap probability drifted: designed {} refit {}",
        stats.p_ovl,
        refit.p_ovl
    );
    let pairs = [
        ("same-speaker pauses", &stats.same_spk, &refit.same_spk),
        ("different-speaker gaps", &stats.diff_spk, &refit.diff_spk),
        ("overlaps", &stats.overlap, &refit.overlap),
    ];
    for (name, designed, recovered) in pairs {
        let distance = designed.emd(recovered).expect("both histograms are non-empty");
        assert!(
            distance <= 2.0 * stats.bin_width,
            "{name}: earth-mover distance {distance} exceeds two bin widths"
        );
    }
    pass(9, "10000+ mixtures round-trip their pause statistics within bounds");
}

fn write_tone_wav(path: &Path, frequency: f32, seconds: f32, sample_rate: u32) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).expect("writable temp dir");
    let samples = (seconds * sample_rate as f32) as u32;
    for t in 0..samples {
        let phase = 2.0 * std::f32::consts::PI * frequency * t as f32 / sample_rate as f32;
        writer.write_sample(0.25 * phase.sin()).expect("writable temp dir");
    }
    writer.finalize().expect("writable temp dir");
}

/// 10. With a loudness range of (-25, -20) dB, every rendered mixture
/// measures an integrated loudness inside that range with 0.5 dB slack.
#[test]
fn acceptance_10_rendered_mixtures_hit_the_loudness_range() {
    let dir = tempfile::tempdir().expect("temp dir");
    let sample_rate = 16_000;
    let speakers = 8;
    for speaker in 0..speakers {
        write_tone_wav(
            &dir.path().join(format!("spk{speaker}.wav")),
            260.0 + 55.0 * speaker as f32,
            2.6,
            sample_rate,
        );
    }

    let mut rng = SeedRng::new(0xACC0_000A);
    let mut pool = Vec::with_capacity(speakers * 400);
    for speaker in 0..speakers {
        for i in 0..400 {
            let duration = rng.gen_range(0.8..2.0);
            let mut segment = seg(
                &format!("s{speaker}-{i:03}"),
                &format!("spk{speaker}"),
                0.0,
                duration,
            );
            segment.audio = Some(AudioSource {
                path: dir.path().join(format!("spk{speaker}.wav")),
                channel: 0,
            });
            pool.push(segment);
        }
    }

    let config = GenerationConfig {
        max_speakers: 3,
        max_speaker_dur: 6.0,
        loudness_db: Some((-25.0, -20.0)),
        seed: 0x5EED_000A,
        ..GenerationConfig::default()
    };
    let specs = generate_mixtures(&pool, &designed_stats(), &config).expect("valid pool");
    assert!(specs.len() >= 100, "only {} mixtures generated", specs.len());

    for spec in specs.iter().take(100) {
        let mut render_rng = SeedRng::new(spec.seed);
        let rendered = render_audio(spec, &config, &mut render_rng).expect("renderable spec");
        let loudness = integrated_loudness(&rendered.mixture, rendered.sample_rate)
            .expect("mixtures are longer than one loudness block");
        assert!(
            (-25.5..=-19.5).contains(&loudness),
            "{}: integrated loudness {loudness} dB outside [-25.5, -19.5]",
            spec.id
        );
    }
    pass(10, "100 rendered mixtures measure within the loudness range");
}

fn run_tool(args: &[&str], dir: &Path) {
    let output = Command::new(env!("CARGO_BIN_EXE_mtasr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "mtasr {args:?} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
}

/// 11. The simulation and scoring commands are deterministic: two runs with
/// the same seed and inputs produce byte-identical files.
#[test]
fn acceptance_11_simulate_and_score_are_byte_deterministic() {
    let dir = tempfile::tempdir().expect("temp dir");
    let meetings = concat!(
        r#"{"id": "m1", "segments": ["#,
        r#"{"id": "a1", "speaker": "ann", "start": 0.0, "end": 2.0, "text": "we can begin now"}, "#,
        r#"{"id": "a2", "speaker": "ann", "start": 2.4, "end": 3.4, "text": "as planned"}, "#,
        r#"{"id": "b1", "speaker": "ben", "start": 3.2, "end": 4.6, "text": "sounds good to me"}, "#,
        r#"{"id": "a3", "speaker": "ann", "start": 5.0, "end": 6.2, "text": "first item"}, "#,
        r#"{"id": "b2", "speaker": "ben", "start": 6.0, "end": 7.4, "text": "one question there"}]}"#,
        "\n",
        r#"{"id": "m2", "segments": ["#,
        r#"{"id": "c1", "speaker": "cat", "start": 0.0, "end": 1.8, "text": "status update first"}, "#,
        r#"{"id": "c2", "speaker": "cat", "start": 2.1, "end": 3.0, "text": "then planning"}, "#,
        r#"{"id": "d1", "speaker": "dan", "start": 3.5, "end": 5.0, "text": "metrics look stable"}, "#,
        r#"{"id": "d2", "speaker": "dan", "start": 4.9, "end": 6.1, "text": "one regression"}, "#,
        r#"{"id": "c3", "speaker": "cat", "start": 6.5, "end": 7.2, "text": "noted thanks"}]}"#,
    );
    std::fs::write(dir.path().join("meetings.jsonl"), meetings).expect("writable temp dir");

    run_tool(
        &["fit-stats", "--meetings", "meetings.jsonl", "--bin-width", "0.1", "--out", "stats.json"],
        dir.path(),
    );
    let simulate = |out: &str| {
        run_tool(
            &[
                "simulate", "--segments", "meetings.jsonl", "--stats", "stats.json",
                "--max-speakers", "2", "--max-speaker-dur", "10", "--seed", "4242", "--out", out,
            ],
            dir.path(),
        );
    };
    simulate("mix_a.jsonl");
    simulate("mix_b.jsonl");
    let mix_a = std::fs::read(dir.path().join("mix_a.jsonl")).expect("written");
    let mix_b = std::fs::read(dir.path().join("mix_b.jsonl")).expect("written");
    assert_eq!(mix_a, mix_b, "simulate runs with one seed must be byte-identical");

    run_tool(
        &["heat", "--mixtures", "mix_a.jsonl", "--channels", "2", "--out", "refs.jsonl"],
        dir.path(),
    );
    let score = |out: &str| {
        run_tool(
            &[
                "score", "--refs", "mix_a.jsonl", "--hyps", "refs.jsonl",
                "--metric", "orc", "--ngram", "2", "--out", out,
            ],
            dir.path(),
        );
    };
    score("report_a.json");
    score("report_b.json");
    let report_a = std::fs::read(dir.path().join("report_a.json")).expect("written");
    let report_b = std::fs::read(dir.path().join("report_b.json")).expect("written");
    assert_eq!(report_a, report_b, "score runs must be byte-identical");

    pass(11, "simulate and score are byte-identical across same-seed runs");
}

/// 12. The three n-gram diagnostic worked examples reproduce exactly, and
/// leakage, omission, and the exactly-one-channel rate partition the unique
/// reference n-grams on 1000 random instances.
#[test]
fn acceptance_12_ngram_diagnostics_partition_reference_ngrams() {
    let refs = vec![seq("a b c d")];
    // Present in both channels: pure leakage.
    let both = ngram_diagnostics(&refs, &[seq("x a b c d"), seq("a b c d y")], 4)
        .expect("valid order");
    assert_eq!(both.leakage, 1.0);
    assert_eq!(both.omission, 0.0);
    // Present in no channel: pure omission.
    let neither = ngram_diagnostics(
        &refs,
        &[TokenSequence::default(), TokenSequence::default()],
        4,
    )
    .expect("valid order");
    assert_eq!(neither.leakage, 0.0);
    assert_eq!(neither.omission, 1.0);
    // Present in exactly one channel: neither leaked nor omitted.
    let exactly_one = ngram_diagnostics(&refs, &[seq("a b c d"), TokenSequence::default()], 4)
        .expect("valid order");
    assert_eq!(exactly_one.leakage, 0.0);
    assert_eq!(exactly_one.omission, 0.0);

    let mut rng = SeedRng::new(0xACC0_000C);
    for trial in 0..1_000 {
        let order = rng.gen_range(1..=3);
        let vocab = rng.gen_range(2..=4);
        let utterances = rng.gen_range(0..=4);
        let channels = rng.gen_range(2..=3);
        let refs: Vec<TokenSequence> = (0..utterances)
            .map(|_| random_sequence(&mut rng, 0, 6, vocab))
            .collect();
        let hyps: Vec<TokenSequence> = (0..channels)
            .map(|_| random_sequence(&mut rng, 0, 8, vocab))
            .collect();
        let diag = ngram_diagnostics(&refs, &hyps, order).expect("valid order");

        // Independent recount straight from the definition.
        let mut unique: HashSet<&[String]> = HashSet::new();
        for reference in &refs {
            unique.extend(reference.tokens().windows(order));
        }
        let (mut leaked, mut omitted, mut exactly_one) = (0usize, 0usize, 0usize);
        for gram in &unique {
            let holders = hyps
                .iter()
                .filter(|h| h.tokens().windows(order).any(|w| w == *gram))
                .count();
            match holders {
                0 => omitted += 1,
                1 => exactly_one += 1,
                _ => leaked += 1,
            }
        }
        assert_eq!(diag.total_unique, unique.len(), "trial {trial}");
        assert_eq!(diag.leaked, leaked, "trial {trial}");
        assert_eq!(diag.omitted, omitted, "trial {trial}");
        assert_eq!(leaked + exactly_one + omitted, unique.len(), "trial {trial}");
        if unique.is_empty() {
            assert_eq!(diag.leakage, 0.0, "trial {trial}");
            assert_eq!(diag.omission, 0.0, "trial {trial}");
        } else {
            let exactly_one_rate = exactly_one as f64 / unique.len() as f64;
            assert!(
                (diag.leakage + diag.omission + exactly_one_rate - 1.0).abs() < 1e-12,
                "trial {trial}: rates do not partition ({} + {} + {exactly_one_rate})",
                diag.leakage,
                diag.omission
            );
        }
    }
    pass(12, "n-gram worked examples and partition identity hold");
}
