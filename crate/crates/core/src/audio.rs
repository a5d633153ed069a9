//! Signal primitives: resampling, peak normalization and annotation-driven
//! segmentation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::label::{DatasetTag, EventClass};
use crate::math;

/// Segments shorter than this (25 ms at 16 kHz) cannot produce a single encoder frame.
pub const MIN_SEGMENT_SAMPLES: usize = 400;

/// Peaks below this are treated as silence.
pub const SILENCE_PEAK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AudioError {
    #[error("signal has no samples")]
    EmptySignal,
    #[error("sample rate must be positive")]
    InvalidRate,
    #[error("degenerate signal: {0}")]
    DegenerateSignal(&'static str),
    #[error("annotation {index} ends at {end_s} s, past the recording end at {duration_s} s")]
    AnnotationOutOfRange { index: usize, end_s: f64, duration_s: f64 },
    #[error("annotation {index} is invalid: {reason}")]
    InvalidAnnotation { index: usize, reason: &'static str },
    #[error("interleaved buffer of {len} samples is not a multiple of {channels} channels")]
    ChannelMismatch { len: usize, channels: usize },
}

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    /// Averages interleaved channels into one.
    pub fn from_interleaved(
        interleaved: &[f64],
        channels: usize,
        sample_rate: u32,
    ) -> Result<Self, AudioError> {
        if channels == 0 || !interleaved.len().is_multiple_of(channels) {
            return Err(AudioError::ChannelMismatch { len: interleaved.len(), channels });
        }
        let samples = interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect();
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|s| s.is_finite())
    }

    /// Splits into consecutive windows of at most `max_len` samples.
    pub fn chunks(&self, max_len: usize) -> Vec<Waveform> {
        assert!(max_len > 0);
        self.samples
            .chunks(max_len)
            .map(|c| Waveform::new(c.to_vec(), self.sample_rate))
            .collect()
    }
}

/// A labeled event inside a recording, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub start_s: f64,
    pub end_s: f64,
    pub label: EventClass,
}

/// A preprocessed event segment plus the identifiers needed for subject-level splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSegment {
    pub wave: Waveform,
    pub label: EventClass,
    pub subject_id: String,
    pub recording_id: String,
    pub dataset: DatasetTag,
    pub start_s: f64,
}

impl LabeledSegment {
    pub fn duration_s(&self) -> f64 {
        self.wave.duration_s()
    }
}

/// Identifiers attached to every segment cut from one recording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingMeta {
    pub subject_id: String,
    pub recording_id: String,
    pub dataset: DatasetTag,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

const SINC_ZERO_CROSSINGS: f64 = 16.0;
const KAISER_BETA: f64 = 8.6;
const ROLLOFF: f64 = 0.95;

/// Band-limited resampling with a Kaiser-windowed sinc interpolator.
///
/// The output has `round(len * target / source)` samples. A waveform already at
/// `target_rate` is returned unchanged.
pub fn resample(wave: &Waveform, target_rate: u32) -> Result<Waveform, AudioError> {
    if wave.samples.is_empty() {
        return Err(AudioError::EmptySignal);
    }
    if target_rate == 0 || wave.sample_rate == 0 {
        return Err(AudioError::InvalidRate);
    }
    if wave.sample_rate == target_rate {
        return Ok(wave.clone());
    }
    let src = wave.sample_rate as u64;
    let tgt = target_rate as u64;
    let g = gcd(src, tgt);
    let up = (tgt / g) as usize;
    let down = (src / g) as usize;
    let len = wave.samples.len();
    let out_len = ((len as u128 * tgt as u128 + src as u128 / 2) / src as u128) as usize;

    // cutoff relative to the input Nyquist frequency
    let cutoff = ROLLOFF * (tgt as f64 / src as f64).min(1.0);
    let half_width = SINC_ZERO_CROSSINGS / cutoff;
    let reach = math::floor(half_width) as isize + 1;
    let taps = (2 * reach + 1) as usize;
    let i0_beta = bessel_i0(KAISER_BETA);

    let mut bank = vec![0.0; up * taps];
    for phase in 0..up {
        let frac = phase as f64 / up as f64;
        let row = &mut bank[phase * taps..(phase + 1) * taps];
        for (j, w) in row.iter_mut().enumerate() {
            let offset = j as isize - reach;
            let d = frac - offset as f64;
            let t = d / half_width;
            if t.abs() >= 1.0 {
                continue;
            }
            let arg = core::f64::consts::PI * cutoff * d;
            let sinc = if arg.abs() < 1e-12 { 1.0 } else { math::sin(arg) / arg };
            let window = bessel_i0(KAISER_BETA * math::sqrt(1.0 - t * t)) / i0_beta;
            *w = cutoff * sinc * window;
        }
        let sum: f64 = row.iter().sum();
        if sum.abs() > 1e-12 {
            row.iter_mut().for_each(|w| *w /= sum);
        }
    }

    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let num = n as u128 * down as u128;
        let base = (num / up as u128) as isize;
        let phase = (num % up as u128) as usize;
        let row = &bank[phase * taps..(phase + 1) * taps];
        let lo = (base - reach).max(0);
        let hi = (base + reach).min(len as isize - 1);
        let mut acc = 0.0;
        let mut k = lo;
        while k <= hi {
            acc += wave.samples[k as usize] * row[(k - base + reach) as usize];
            k += 1;
        }
        out.push(acc);
    }
    Ok(Waveform::new(out, target_rate))
}

/// Scales the waveform so that its peak absolute amplitude is exactly 1.
pub fn normalize_amplitude(wave: &Waveform) -> Result<Waveform, AudioError> {
    if wave.samples.is_empty() {
        return Err(AudioError::EmptySignal);
    }
    let peak = wave.peak();
    if !(peak >= SILENCE_PEAK) {
        return Err(AudioError::DegenerateSignal("peak amplitude below 1e-8"));
    }
    Ok(Waveform::new(wave.samples.iter().map(|s| s / peak).collect(), wave.sample_rate))
}

fn boundary(seconds: f64, rate: u32) -> usize {
    // the epsilon absorbs decimal-to-binary error such as 1.15 * 16000 = 18399.999...
    math::floor(seconds * rate as f64 + 1e-7).max(0.0) as usize
}

/// Checks ordering, positivity and in-range bounds of a recording's annotations.
pub fn validate_annotations(annotations: &[Annotation], duration_s: f64) -> Result<(), AudioError> {
    let mut prev_end = 0.0;
    for (index, a) in annotations.iter().enumerate() {
        if !(a.start_s >= 0.0) || !a.end_s.is_finite() {
            return Err(AudioError::InvalidAnnotation { index, reason: "negative or non-finite bounds" });
        }
        if !(a.end_s > a.start_s) {
            return Err(AudioError::InvalidAnnotation { index, reason: "end_s must exceed start_s" });
        }
        if a.start_s < prev_end {
            return Err(AudioError::InvalidAnnotation { index, reason: "overlapping or unsorted" });
        }
        if a.end_s > duration_s + 1e-9 {
            return Err(AudioError::AnnotationOutOfRange { index, end_s: a.end_s, duration_s });
        }
        prev_end = a.end_s;
    }
    Ok(())
}

/// Cuts one segment per annotation over the half-open sample range
/// `[floor(start * rate), floor(end * rate))`.
pub fn segment_recording(
    recording: &Waveform,
    annotations: &[Annotation],
    meta: &RecordingMeta,
) -> Result<Vec<LabeledSegment>, AudioError> {
    if recording.sample_rate == 0 {
        return Err(AudioError::InvalidRate);
    }
    validate_annotations(annotations, recording.duration_s())?;
    let rate = recording.sample_rate;
    let len = recording.samples.len();
    Ok(annotations
        .iter()
        .map(|a| {
            let start = boundary(a.start_s, rate).min(len);
            let end = boundary(a.end_s, rate).min(len);
            LabeledSegment {
                wave: Waveform::new(recording.samples[start..end].to_vec(), rate),
                label: a.label,
                subject_id: meta.subject_id.clone(),
                recording_id: meta.recording_id.clone(),
                dataset: meta.dataset,
                start_s: a.start_s,
            }
        })
        .collect())
}

/// Final per-segment preprocessing: rejects segments shorter than 25 ms and
/// peak-normalizes the rest.
pub fn finalize_segment(mut segment: LabeledSegment) -> Result<LabeledSegment, AudioError> {
    if segment.wave.samples.len() < MIN_SEGMENT_SAMPLES {
        return Err(AudioError::DegenerateSignal("segment shorter than 25 ms"));
    }
    segment.wave = normalize_amplitude(&segment.wave)?;
    Ok(segment)
}
