//! Dataset trees: `<root>/<subject>/<recording>.wav`, each with a sibling
//! `<recording>.jsonl` annotation file, plus an optional `manifest.jsonl`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use inhaler_core::audio::{self, RecordingMeta};
use inhaler_core::corpus::{CorpusManifest, SegmentRecord, SynthCorpus};
use inhaler_core::{Annotation, DatasetTag, LabeledSegment, Waveform, MODEL_SAMPLE_RATE};

use crate::formats::{read_annotations, write_annotations, write_manifest_file};
use crate::wav::{read_wav, write_wav};
use crate::IoError;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(IoError::fs(dir))?
        .map(|e| e.map(|e| e.path()).map_err(IoError::fs(dir)))
        .collect::<Result<_, _>>()?;
    out.sort();
    Ok(out)
}

/// Every `(subject, recording, wav path)` under `root`, in lexicographic order.
pub fn find_recordings(root: &Path) -> Result<Vec<(String, String, PathBuf)>, IoError> {
    let mut out = Vec::new();
    for subject_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let subject = file_name(&subject_dir);
        for wav in sorted_entries(&subject_dir)? {
            if wav.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
                let recording = wav.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                out.push((subject.clone(), recording, wav));
            }
        }
    }
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

fn wav_duration(path: &Path) -> Result<f64, IoError> {
    let r = hound::WavReader::open(path)
        .map_err(|e| IoError::UnreadableAudio { path: path.to_path_buf(), reason: e.to_string() })?;
    Ok(r.duration() as f64 / r.spec().sample_rate as f64)
}

/// Indexes every annotated segment under `root`.
pub fn load_manifest(root: &Path, dataset: DatasetTag) -> Result<CorpusManifest, IoError> {
    let recordings = find_recordings(root)?;
    if recordings.is_empty() {
        return Err(IoError::EmptyDataset(root.to_path_buf()));
    }
    let mut entries = Vec::new();
    for (subject, recording, wav) in recordings {
        let ann_path = wav.with_extension("jsonl");
        if !ann_path.is_file() {
            return Err(IoError::MissingAnnotation(wav));
        }
        let annotations = read_annotations(&ann_path)?;
        let duration = wav_duration(&wav)?;
        audio::validate_annotations(&annotations, duration)
            .map_err(|e| IoError::Audio { path: ann_path.clone(), reason: e.to_string() })?;
        let rel = relative(root, &wav);
        entries.extend(annotations.iter().map(|a| SegmentRecord {
            path: rel.clone(),
            subject_id: subject.clone(),
            recording_id: recording.clone(),
            start_s: a.start_s,
            end_s: a.end_s,
            label: a.label,
            dataset,
        }));
    }
    Ok(CorpusManifest::new(dataset, entries)?)
}

/// Reads a recording and brings it to the model sample rate.
pub fn read_recording(path: &Path) -> Result<Waveform, IoError> {
    let wave = read_wav(path)?;
    audio::resample(&wave, MODEL_SAMPLE_RATE).map_err(|e| IoError::Audio { path: path.to_path_buf(), reason: e.to_string() })
}

/// Cuts, resamples and normalizes every manifest segment.
pub fn load_segments(root: &Path, manifest: &CorpusManifest) -> Result<Vec<LabeledSegment>, IoError> {
    let mut by_path: BTreeMap<&str, Vec<&SegmentRecord>> = BTreeMap::new();
    for e in manifest.entries() {
        by_path.entry(e.path.as_str()).or_default().push(e);
    }
    let mut out = Vec::with_capacity(manifest.entries().len());
    // keep manifest order: entries are sorted by subject, recording, start
    let mut segments: BTreeMap<(String, String, u64), LabeledSegment> = BTreeMap::new();
    for (rel, entries) in by_path {
        let path = root.join(rel);
        let wave = read_recording(&path)?;
        let annotations: Vec<Annotation> =
            entries.iter().map(|e| Annotation { start_s: e.start_s, end_s: e.end_s, label: e.label }).collect();
        let meta = RecordingMeta {
            subject_id: entries[0].subject_id.clone(),
            recording_id: entries[0].recording_id.clone(),
            dataset: entries[0].dataset,
        };
        let audio_err = |e: audio::AudioError| IoError::Audio { path: path.clone(), reason: e.to_string() };
        for seg in audio::segment_recording(&wave, &annotations, &meta).map_err(audio_err)? {
            let seg = audio::finalize_segment(seg).map_err(audio_err)?;
            segments.insert((seg.subject_id.clone(), seg.recording_id.clone(), seg.start_s.to_bits()), seg);
        }
    }
    for e in manifest.entries() {
        if let Some(s) = segments.remove(&(e.subject_id.clone(), e.recording_id.clone(), e.start_s.to_bits())) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Whole recordings (16 kHz, peak-normalized) with their subject, for pretraining.
pub fn load_recordings(root: &Path, manifest: &CorpusManifest) -> Result<Vec<(String, Waveform)>, IoError> {
    let mut paths: Vec<(&str, &str)> = manifest.entries().iter().map(|e| (e.path.as_str(), e.subject_id.as_str())).collect();
    paths.dedup();
    paths
        .into_iter()
        .map(|(rel, subject)| {
            let path = root.join(rel);
            let w = read_recording(&path)?;
            let w = audio::normalize_amplitude(&w).map_err(|e| IoError::Audio { path, reason: e.to_string() })?;
            Ok((subject.to_string(), w))
        })
        .collect()
}

/// Writes a synthetic corpus in the dataset layout and returns its manifest.
pub fn write_synth_tree(out: &Path, corpus: &SynthCorpus) -> Result<CorpusManifest, IoError> {
    for r in &corpus.recordings {
        let dir = out.join(&r.subject_id);
        std::fs::create_dir_all(&dir).map_err(IoError::fs(&dir))?;
        let wav = out.join(r.path());
        write_wav(&wav, &r.wave)?;
        write_annotations(&wav.with_extension("jsonl"), &r.annotations)?;
    }
    let manifest = corpus.manifest()?;
    write_manifest_file(&out.join(MANIFEST_FILE), manifest.entries())?;
    Ok(manifest)
}
