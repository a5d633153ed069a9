//! Seeded synthetic inhaler-sound corpus.
//!
//! Each recording holds one inhaler use: an actuation, an exhalation and an
//! inhalation separated by pauses, over a constant noise floor. The two
//! domains differ in the actuation sound (tonal decaying partials against a
//! short broadband click) and in the inhalation band, which is the acoustic
//! gap the cross-device experiments need.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CorpusError, CorpusManifest, SegmentRecord};
use crate::audio::{self, Annotation, AudioError, LabeledSegment, RecordingMeta, Waveform};
use crate::label::{DatasetTag, EventClass};
use crate::math;
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthDomain {
    DpiLike,
    MdiLike,
}

impl SynthDomain {
    pub fn dataset_tag(self) -> DatasetTag {
        match self {
            SynthDomain::DpiLike => DatasetTag::SyntheticDpi,
            SynthDomain::MdiLike => DatasetTag::SyntheticMdi,
        }
    }

    /// Inhalation noise band in Hz.
    pub fn inhalation_band(self) -> (f64, f64) {
        match self {
            SynthDomain::DpiLike => (400.0, 900.0),
            SynthDomain::MdiLike => (1200.0, 2000.0),
        }
    }
}

/// Maximum per-subject shift of each class's band centre, in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandOffsets {
    pub actuation: f64,
    pub exhalation: f64,
    pub inhalation: f64,
}

impl Default for BandOffsets {
    fn default() -> Self {
        Self { actuation: 100.0, exhalation: 30.0, inhalation: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub domain: SynthDomain,
    pub n_subjects: usize,
    pub n_recordings_per_subject: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub band_offsets_hz: BandOffsets,
    /// Background noise level relative to the recording peak.
    pub noise_floor_db: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            domain: SynthDomain::DpiLike,
            n_subjects: 7,
            n_recordings_per_subject: 10,
            seed: 1,
            sample_rate: 16_000,
            band_offsets_hz: BandOffsets::default(),
            noise_floor_db: -40.0,
        }
    }
}

impl SynthConfig {
    /// Rejects configurations the generator cannot render.
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.n_subjects == 0 || self.n_recordings_per_subject == 0 {
            return Err("n_subjects and n_recordings_per_subject must be positive");
        }
        if self.sample_rate < 8_000 {
            return Err("sample_rate must be at least 8000 Hz");
        }
        let o = self.band_offsets_hz;
        if [o.actuation, o.exhalation, o.inhalation].iter().any(|v| !(0.0..300.0).contains(v)) {
            return Err("band offsets must lie in [0, 300) Hz");
        }
        if !(self.noise_floor_db.is_finite() && self.noise_floor_db <= 0.0) {
            return Err("noise_floor_db must be finite and not positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub subject_id: String,
    pub recording_id: String,
    pub wave: Waveform,
    pub annotations: Vec<Annotation>,
}

impl SynthRecording {
    /// Relative file path used when the corpus is written to disk.
    pub fn path(&self) -> String {
        format!("{}/{}.wav", self.subject_id, self.recording_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub recordings: Vec<SynthRecording>,
}

impl SynthCorpus {
    pub fn dataset(&self) -> DatasetTag {
        self.config.domain.dataset_tag()
    }

    pub fn manifest(&self) -> Result<CorpusManifest, CorpusError> {
        let dataset = self.dataset();
        let entries = self
            .recordings
            .iter()
            .flat_map(|r| {
                r.annotations.iter().map(move |a| SegmentRecord {
                    path: r.path(),
                    subject_id: r.subject_id.clone(),
                    recording_id: r.recording_id.clone(),
                    start_s: a.start_s,
                    end_s: a.end_s,
                    label: a.label,
                    dataset,
                })
            })
            .collect();
        CorpusManifest::new(dataset, entries)
    }

    /// Cuts and normalizes every annotated segment.
    pub fn labeled_segments(&self) -> Result<Vec<LabeledSegment>, AudioError> {
        let mut out = Vec::new();
        for r in &self.recordings {
            let meta = RecordingMeta {
                subject_id: r.subject_id.clone(),
                recording_id: r.recording_id.clone(),
                dataset: self.dataset(),
            };
            for seg in audio::segment_recording(&r.wave, &r.annotations, &meta)? {
                out.push(audio::finalize_segment(seg)?);
            }
        }
        Ok(out)
    }
}

fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn gaussian(rng: &mut SeededRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Band-pass biquad (constant 0 dB peak gain), applied twice for a 4th-order skirt.
fn bandpass(signal: &mut [f64], low_hz: f64, high_hz: f64, rate: f64) {
    let centre = math::sqrt(low_hz * high_hz);
    let q = centre / (high_hz - low_hz);
    let w0 = 2.0 * PI * centre / rate;
    let alpha = math::sin(w0) / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * math::cos(w0) / a0, (1.0 - alpha) / a0);
    for _ in 0..2 {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for s in signal.iter_mut() {
            let x = *s;
            let y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = x;
            y2 = y1;
            y1 = y;
            *s = y;
        }
    }
}

fn scale_to_peak(signal: &mut [f64], peak: f64) {
    let m = signal.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    if m > 0.0 {
        signal.iter_mut().for_each(|s| *s *= peak / m);
    }
}

struct SubjectProfile {
    act_shift: f64,
    exh_shift: f64,
    inh_shift: f64,
    loudness: f64,
    breath_scale: f64,
}

fn actuation(domain: SynthDomain, profile: &SubjectProfile, rng: &mut SeededRng, rate: f64) -> (Vec<f64>, usize, usize) {
    match domain {
        SynthDomain::DpiLike => {
            let len = (uniform(rng, 0.04, 0.12) * rate) as usize;
            let partials = 2 + (rng.random::<u32>() % 3) as usize;
            let mut sig = vec![0.0; len];
            for _ in 0..partials {
                let f = (uniform(rng, 800.0, 2000.0) + profile.act_shift).clamp(700.0, 2200.0);
                let phase = uniform(rng, 0.0, 2.0 * PI);
                let amp = uniform(rng, 0.4, 1.0);
                // decays to about -40 dB by the end of the event
                let decay = uniform(rng, 3.5, 5.5) / len as f64;
                for (i, s) in sig.iter_mut().enumerate() {
                    *s += amp * math::exp(-decay * i as f64) * math::sin(2.0 * PI * f * i as f64 / rate + phase);
                }
            }
            scale_to_peak(&mut sig, uniform(rng, 0.6, 1.0) * profile.loudness);
            (sig, 0, len)
        }
        SynthDomain::MdiLike => {
            // the click itself is at most 20 ms; the labeled window pads it with 10 ms before and
            // the decaying tail after, so the segment clears the 25 ms minimum
            let click = (uniform(rng, 0.008, 0.02) * rate) as usize;
            let lead = (0.01 * rate) as usize;
            let window = lead + click + (uniform(rng, 0.03, 0.05) * rate) as usize;
            let mut sig = vec![0.0; window];
            let decay = uniform(rng, 4.0, 6.0) / click as f64;
            for i in 0..click {
                sig[lead + i] = gaussian(rng) * math::exp(-decay * i as f64);
            }
            scale_to_peak(&mut sig, uniform(rng, 0.7, 1.0) * profile.loudness);
            (sig, 0, window)
        }
    }
}

fn breath(
    rng: &mut SeededRng,
    seconds: f64,
    band: (f64, f64),
    rising: bool,
    peak: f64,
    rate: f64,
) -> Vec<f64> {
    let len = (seconds * rate) as usize;
    let mut sig: Vec<f64> = (0..len).map(|_| gaussian(rng)).collect();
    bandpass(&mut sig, band.0, band.1, rate);
    let attack = (0.05 * rate) as usize;
    for (i, s) in sig.iter_mut().enumerate() {
        let u = i as f64 / len as f64;
        let env = if rising {
            math::sin(PI * u)
        } else {
            let a = if i < attack { i as f64 / attack as f64 } else { 1.0 };
            a * math::powf(1.0 - u, 1.5)
        };
        *s *= env;
    }
    scale_to_peak(&mut sig, peak);
    sig
}

fn recording(
    config: &SynthConfig,
    profile: &SubjectProfile,
    rng: &mut SeededRng,
) -> (Vec<f64>, Vec<Annotation>) {
    let rate = config.sample_rate as f64;
    let secs = |s: f64| (s * rate) as usize;
    let mut samples: Vec<f64> = Vec::new();
    let mut annotations = Vec::new();
    let mut push_event = |samples: &mut Vec<f64>, sig: Vec<f64>, label: EventClass| {
        let start = samples.len();
        let end = start + sig.len();
        samples.extend(sig);
        annotations.push(Annotation { start_s: start as f64 / rate, end_s: end as f64 / rate, label });
    };

    samples.resize(secs(uniform(rng, 0.3, 0.6)), 0.0);
    let (act, _, _) = actuation(config.domain, profile, rng, rate);
    push_event(&mut samples, act, EventClass::Actuation);

    samples.resize(samples.len() + secs(uniform(rng, 0.4, 0.9)), 0.0);
    let exh_band = (200.0 + profile.exh_shift, 500.0 + profile.exh_shift);
    let exh_len = (uniform(rng, 0.8, 2.0) * profile.breath_scale).clamp(0.8, 2.0);
    let exh_peak = uniform(rng, 0.3, 0.7) * profile.loudness;
    let exh = breath(rng, exh_len, exh_band, false, exh_peak, rate);
    push_event(&mut samples, exh, EventClass::Exhalation);

    samples.resize(samples.len() + secs(uniform(rng, 0.3, 0.7)), 0.0);
    let (lo, hi) = config.domain.inhalation_band();
    let inh_band = (lo + profile.inh_shift, hi + profile.inh_shift);
    let inh_len = (uniform(rng, 1.0, 2.5) * profile.breath_scale).clamp(1.0, 2.5);
    let inh_peak = uniform(rng, 0.4, 0.9) * profile.loudness;
    let inh = breath(rng, inh_len, inh_band, true, inh_peak, rate);
    push_event(&mut samples, inh, EventClass::Inhalation);

    samples.resize(samples.len() + secs(uniform(rng, 0.3, 0.6)), 0.0);

    let peak = samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
    let floor = peak * math::powf(10.0, config.noise_floor_db / 20.0);
    for s in samples.iter_mut() {
        // stored at 32-bit precision so in-memory and on-disk corpora agree exactly
        *s = ((*s + floor * gaussian(rng)) as f32) as f64;
    }
    (samples, annotations)
}

/// Generates the corpus. The output depends only on `config`.
pub fn synth_generate(config: &SynthConfig) -> SynthCorpus {
    let mut recordings = Vec::with_capacity(config.n_subjects * config.n_recordings_per_subject);
    for s in 0..config.n_subjects {
        let subject_id = format!("S{:02}", s + 1);
        let mut srng = rng::seeded(rng::derive_seed(config.seed, 1 + s as u64));
        let offsets = config.band_offsets_hz;
        let profile = SubjectProfile {
            act_shift: uniform(&mut srng, -offsets.actuation, offsets.actuation),
            exh_shift: uniform(&mut srng, -offsets.exhalation, offsets.exhalation),
            inh_shift: uniform(&mut srng, -offsets.inhalation, offsets.inhalation),
            loudness: uniform(&mut srng, 0.7, 1.0),
            breath_scale: uniform(&mut srng, 0.85, 1.15),
        };
        for r in 0..config.n_recordings_per_subject {
            let mut rrng = rng::seeded(rng::derive_seed(config.seed, ((s as u64 + 1) << 32) | (r as u64 + 1)));
            let (samples, annotations) = recording(config, &profile, &mut rrng);
            recordings.push(SynthRecording {
                subject_id: subject_id.clone(),
                recording_id: format!("r{:02}", r + 1),
                wave: Waveform::new(samples, config.sample_rate),
                annotations,
            });
        }
    }
    SynthCorpus { config: config.clone(), recordings }
}
