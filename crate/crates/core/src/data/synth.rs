//! Seeded stand-in for a single-channel machine vibration trace.
//!
//! Both regimes are a sum of two sinusoids plus Gaussian noise. The abnormal
//! regime shifts the primary frequency slightly, lowers its amplitude a
//! little and adds short periodic bursts of a faster oscillation, so the two
//! regimes share scale and value range but differ in their temporal
//! structure.

use std::f64::consts::TAU;

use super::{Label, Segment, SensorSeries};
use crate::error::{Error, Result};
use crate::ndcore::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeParams {
    /// Primary frequency in cycles per sample.
    pub freq1: f64,
    pub amp1: f64,
    pub freq2: f64,
    pub amp2: f64,
    pub burst_amp: f64,
    pub burst_freq: f64,
    /// Samples between burst onsets.
    pub burst_period: usize,
    /// Samples per burst.
    pub burst_len: usize,
}

impl RegimeParams {
    pub fn normal_default() -> Self {
        RegimeParams {
            freq1: 0.05,
            amp1: 1.0,
            freq2: 0.13,
            amp2: 0.5,
            burst_amp: 0.0,
            burst_freq: 0.0,
            burst_period: 1,
            burst_len: 0,
        }
    }

    pub fn abnormal_default() -> Self {
        RegimeParams {
            freq1: 0.062,
            amp1: 0.9,
            burst_amp: 0.2,
            burst_freq: 0.31,
            burst_period: 15,
            burst_len: 6,
            ..Self::normal_default()
        }
    }

    fn value(&self, t: usize, phase1: f64, phase2: f64, phase_b: f64) -> f64 {
        let tf = t as f64;
        let mut x = self.amp1 * (TAU * self.freq1 * tf + phase1).sin() + self.amp2 * (TAU * self.freq2 * tf + phase2).sin();
        if self.burst_len > 0 && self.burst_amp != 0.0 && t % self.burst_period.max(1) < self.burst_len {
            x += self.burst_amp * (TAU * self.burst_freq * tf + phase_b).sin();
        }
        x
    }
}

/// A labeled stretch given as fractions of the series length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSpec {
    pub start_frac: f64,
    pub end_frac: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthProfile {
    pub seed: u64,
    pub length: usize,
    pub sample_rate: f64,
    pub normal: RegimeParams,
    pub abnormal: RegimeParams,
    pub noise_sd: f64,
    pub layout: Vec<SegmentSpec>,
}

impl SynthProfile {
    /// 850 samples at 1 Hz; a 268-sample normal stretch and a 108-sample
    /// abnormal stretch, which with `n = 30` and overlap 28 give 120 and 40
    /// windows.
    pub fn default_with_seed(seed: u64) -> Self {
        SynthProfile {
            seed,
            length: 850,
            sample_rate: 1.0,
            normal: RegimeParams::normal_default(),
            abnormal: RegimeParams::abnormal_default(),
            noise_sd: 0.25,
            layout: Self::default_layout(),
        }
    }

    pub fn default_layout() -> Vec<SegmentSpec> {
        vec![
            SegmentSpec {
                start_frac: 0.05,
                end_frac: 0.365,
                label: Label::Normal,
            },
            SegmentSpec {
                start_frac: 0.65,
                end_frac: 0.777,
                label: Label::Abnormal,
            },
        ]
    }

    /// Segment boundaries in samples (`floor(frac * length)`).
    pub fn segments(&self) -> Result<Vec<Segment>> {
        let mut out = Vec::with_capacity(self.layout.len());
        for spec in &self.layout {
            if !(0.0..=1.0).contains(&spec.start_frac) || !(0.0..=1.0).contains(&spec.end_frac) || spec.start_frac >= spec.end_frac {
                return Err(Error::config(format!(
                    "segment fractions [{}, {}) must satisfy 0 <= start < end <= 1",
                    spec.start_frac, spec.end_frac
                )));
            }
            let start = (spec.start_frac * self.length as f64).floor() as usize;
            let end = (spec.end_frac * self.length as f64).floor() as usize;
            if start >= end {
                return Err(Error::config(format!("segment [{start}, {end}) is empty")));
            }
            out.push(Segment {
                start,
                end,
                label: spec.label,
            });
        }
        Ok(out)
    }
}

/// Generates one trace per `profile`. Samples outside abnormal segments
/// follow the normal regime.
pub fn synth_series(profile: &SynthProfile) -> Result<SensorSeries> {
    if profile.length < 2 {
        return Err(Error::config("synthetic series needs at least two samples"));
    }
    if profile.layout.is_empty() {
        return Err(Error::config("synthetic layout has no segments"));
    }
    if !(profile.noise_sd >= 0.0) {
        return Err(Error::config(format!("noise_sd must be non-negative, got {}", profile.noise_sd)));
    }
    let segments = profile.segments()?;
    let rng = Rng::new(profile.seed);
    let mut phases = rng.split("phase");
    let (p1, p2, pb) = (
        phases.uniform_range(0.0, TAU),
        phases.uniform_range(0.0, TAU),
        phases.uniform_range(0.0, TAU),
    );
    let mut noise = rng.split("noise");
    let mut values = Vec::with_capacity(profile.length);
    for t in 0..profile.length {
        let abnormal = segments.iter().any(|s| s.label == Label::Abnormal && s.start <= t && t < s.end);
        let regime = if abnormal { &profile.abnormal } else { &profile.normal };
        let eps = noise.normal();
        values.push(regime.value(t, p1, p2, pb) + profile.noise_sd * eps);
    }
    SensorSeries::new(1, values, profile.sample_rate, segments)
}
