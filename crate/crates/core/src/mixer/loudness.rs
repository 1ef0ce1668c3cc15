//! Integrated loudness measurement for mono signals.
//!
//! The signal is weighted by a two-stage filter (a high-frequency shelf
//! followed by a high-pass), cut into 400 ms blocks every 100 ms, and the
//! mean square of each block is gated twice: blocks below an absolute floor
//! of -70 dB are dropped, then blocks more than 10 dB below the mean of the
//! remainder are dropped. The reported loudness is the offset-corrected log
//! of the mean square over the surviving blocks, in dB relative to full
//! scale. Filter parameters are prewarped with `tan(pi * fc / fs)` so the
//! response tracks the reference curve at any sample rate.

use std::f64::consts::PI;

const SHELF_GAIN_DB: f64 = 3.999_843_853_97;
const SHELF_Q: f64 = 0.707_175_236_955_419_3;
const SHELF_HZ: f64 = 1_681.974_450_955_531_9;
const SHELF_BASS_EXPONENT: f64 = 0.499_666_774_155;
const HIGHPASS_Q: f64 = 0.500_327_037_325_395_3;
const HIGHPASS_HZ: f64 = 38.135_470_876_139_82;

const BLOCK_SECONDS: f64 = 0.4;
const STEP_SECONDS: f64 = 0.1;
const OFFSET_DB: f64 = -0.691;
const ABSOLUTE_GATE_DB: f64 = -70.0;
const RELATIVE_GATE_DB: f64 = 10.0;

/// Second-order section applied in transposed direct form II.
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn high_shelf(sample_rate: f64) -> Self {
        let k = (PI * SHELF_HZ / sample_rate).tan();
        let vh = 10f64.powf(SHELF_GAIN_DB / 20.0);
        let vb = vh.powf(SHELF_BASS_EXPONENT);
        let q = SHELF_Q;
        let a0 = 1.0 + k / q + k * k;
        Self {
            b0: (vh + vb * k / q + k * k) / a0,
            b1: 2.0 * (k * k - vh) / a0,
            b2: (vh - vb * k / q + k * k) / a0,
            a1: 2.0 * (k * k - 1.0) / a0,
            a2: (1.0 - k / q + k * k) / a0,
        }
    }

    fn high_pass(sample_rate: f64) -> Self {
        let k = (PI * HIGHPASS_HZ / sample_rate).tan();
        let q = HIGHPASS_Q;
        let a0 = 1.0 + k / q + k * k;
        Self {
            b0: 1.0,
            b1: -2.0,
            b2: 1.0,
            a1: 2.0 * (k * k - 1.0) / a0,
            a2: (1.0 - k / q + k * k) / a0,
        }
    }

    fn apply(&self, samples: &mut [f64]) {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for x in samples {
            let y = self.b0 * *x + s1;
            s1 = self.b1 * *x - self.a1 * y + s2;
            s2 = self.b2 * *x - self.a2 * y;
            *x = y;
        }
    }
}

/// Measures gated integrated loudness in dB. Returns `None` when the signal
/// is shorter than one 400 ms block or every block falls below the absolute
/// gate (silence).
pub fn integrated_loudness(samples: &[f64], sample_rate: u32) -> Option<f64> {
    if sample_rate == 0 {
        return None;
    }
    let fs = sample_rate as f64;
    let block = (BLOCK_SECONDS * fs).round() as usize;
    let step = (STEP_SECONDS * fs).round() as usize;
    if block == 0 || step == 0 || samples.len() < block {
        return None;
    }

    let mut weighted = samples.to_vec();
    Biquad::high_shelf(fs).apply(&mut weighted);
    Biquad::high_pass(fs).apply(&mut weighted);

    let mut square_prefix = Vec::with_capacity(weighted.len() + 1);
    square_prefix.push(0.0);
    let mut acc = 0.0;
    for &v in &weighted {
        acc += v * v;
        square_prefix.push(acc);
    }
    let mut block_powers = Vec::new();
    let mut start = 0;
    while start + block <= weighted.len() {
        block_powers.push((square_prefix[start + block] - square_prefix[start]) / block as f64);
        start += step;
    }

    let loudness_of = |power: f64| OFFSET_DB + 10.0 * power.log10();
    let above_absolute: Vec<f64> = block_powers
        .iter()
        .copied()
        .filter(|&p| loudness_of(p) > ABSOLUTE_GATE_DB)
        .collect();
    if above_absolute.is_empty() {
        return None;
    }
    let mean_power = above_absolute.iter().sum::<f64>() / above_absolute.len() as f64;
    let relative_gate = loudness_of(mean_power) - RELATIVE_GATE_DB;

    let kept: Vec<f64> = block_powers
        .iter()
        .copied()
        .filter(|&p| {
            let l = loudness_of(p);
            l > ABSOLUTE_GATE_DB && l > relative_gate
        })
        .collect();
    if kept.is_empty() {
        return None;
    }
    Some(loudness_of(kept.iter().sum::<f64>() / kept.len() as f64))
}

/// Scalar gain that moves a signal measured at `measured` dB to `target` dB.
pub fn loudness_gain(measured: f64, target: f64) -> f64 {
    10f64.powf((target - measured) / 20.0)
}
