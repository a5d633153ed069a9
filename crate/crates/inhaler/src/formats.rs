//! JSON-lines annotation and manifest files.

use std::fmt::Write as _;
use std::path::Path;

use inhaler_core::corpus::SegmentRecord;
use inhaler_core::Annotation;
use serde::Deserialize;

use crate::IoError;

/// Label token of the RDA class that is dropped on load.
pub const NOISE_LABEL: &str = "noise";

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnnotation {
    start_s: f64,
    end_s: f64,
    label: String,
}

fn lines(path: &Path) -> Result<Vec<(usize, String)>, IoError> {
    let text = std::fs::read_to_string(path).map_err(IoError::fs(path))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

/// Reads an annotation file, dropping `noise` lines.
pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>, IoError> {
    let mut out = Vec::new();
    for (line, text) in lines(path)? {
        let parse = |reason: String| IoError::Parse { path: path.to_path_buf(), line, reason };
        let raw: RawAnnotation = serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?;
        if raw.label == NOISE_LABEL {
            continue;
        }
        let label = raw.label.parse().map_err(|e: inhaler_core::label::UnknownLabel| parse(e.to_string()))?;
        out.push(Annotation { start_s: raw.start_s, end_s: raw.end_s, label });
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, annotations: &[Annotation]) -> Result<(), IoError> {
    let mut text = String::new();
    for a in annotations {
        let line = serde_json::to_string(a).map_err(|e| IoError::Write { path: path.to_path_buf(), reason: e.to_string() })?;
        writeln!(text, "{line}").expect("writing to a String");
    }
    std::fs::write(path, text).map_err(IoError::fs(path))
}

pub fn read_manifest_file(path: &Path) -> Result<Vec<SegmentRecord>, IoError> {
    lines(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text).map_err(|e| IoError::Parse { path: path.to_path_buf(), line, reason: e.to_string() })
        })
        .collect()
}

pub fn write_manifest_file(path: &Path, entries: &[SegmentRecord]) -> Result<(), IoError> {
    let mut text = String::new();
    for e in entries {
        let line = serde_json::to_string(e).map_err(|err| IoError::Write { path: path.to_path_buf(), reason: err.to_string() })?;
        writeln!(text, "{line}").expect("writing to a String");
    }
    std::fs::write(path, text).map_err(IoError::fs(path))
}
