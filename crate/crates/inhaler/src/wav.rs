//! WAV reading and writing.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use inhaler_core::Waveform;

use crate::IoError;

/// Reads a PCM (8 to 32 bit) or IEEE-float WAV file, averaging channels to mono.
pub fn read_wav(path: &Path) -> Result<Waveform, IoError> {
    let unreadable = |e: hound::Error| IoError::UnreadableAudio { path: path.to_path_buf(), reason: e.to_string() };
    let mut reader = WavReader::open(path).map_err(unreadable)?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>(),
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader.samples::<i32>().map(|s| s.map(|v| v as f64 * scale)).collect::<Result<_, _>>()
        }
    }
    .map_err(unreadable)?;
    Waveform::from_interleaved(&interleaved, spec.channels as usize, spec.sample_rate)
        .map_err(|e| IoError::UnreadableAudio { path: path.to_path_buf(), reason: e.to_string() })
}

/// Writes mono 32-bit float audio.
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<(), IoError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let fail = |e: hound::Error| IoError::Write { path: path.to_path_buf(), reason: e.to_string() };
    let mut w = WavWriter::create(path, spec).map_err(fail)?;
    for &s in &wave.samples {
        w.write_sample(s as f32).map_err(fail)?;
    }
    w.finalize().map_err(fail)
}
