//! Corpus indexing, published-count validation, subject-level splits,
//! budgeted subsampling and the synthetic inhaler-sound generator.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::label::{DatasetTag, EventClass, NUM_CLASSES};

mod budget;
mod split;
pub mod synth;

pub use budget::{subsample_budget, subsample_segments, BUDGET_SCHEDULE_S};
pub use split::{
    make_loso_folds, split_holdout, split_stratified, SplitPlan, StratifiedSplit,
};
pub use synth::{synth_generate, SynthConfig, SynthCorpus, SynthDomain, SynthRecording};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("class counts differ from the published counts: {0:?}")]
    CountMismatch(Vec<(EventClass, i64)>),
    #[error("need at least 3 subjects, found {0}")]
    TooFewSubjects(usize),
    #[error("class {0} has fewer than 2 segments")]
    ClassTooSmall(EventClass),
    #[error("duplicate manifest entry {subject_id}/{recording_id} at {start_s} s")]
    DuplicateEntry { subject_id: String, recording_id: String, start_s: f64 },
    #[error("manifest entry has non-positive duration: {0}")]
    EmptyEntry(String),
}

/// One annotated segment of one recording, as listed in a manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub path: String,
    pub subject_id: String,
    pub recording_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub label: EventClass,
    pub dataset: DatasetTag,
}

impl SegmentRecord {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// An ordered, validated index of annotated segments.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub dataset: DatasetTag,
    entries: Vec<SegmentRecord>,
}

impl CorpusManifest {
    /// Sorts entries by (subject, recording, start) and rejects duplicates.
    pub fn new(dataset: DatasetTag, mut entries: Vec<SegmentRecord>) -> Result<Self, CorpusError> {
        for e in &entries {
            if !(e.duration_s() > 0.0) {
                return Err(CorpusError::EmptyEntry(e.path.clone()));
            }
        }
        entries.sort_by(|a, b| {
            (&a.subject_id, &a.recording_id)
                .cmp(&(&b.subject_id, &b.recording_id))
                .then(a.start_s.total_cmp(&b.start_s))
        });
        for w in entries.windows(2) {
            if w[0].subject_id == w[1].subject_id
                && w[0].recording_id == w[1].recording_id
                && w[0].start_s == w[1].start_s
            {
                return Err(CorpusError::DuplicateEntry {
                    subject_id: w[1].subject_id.clone(),
                    recording_id: w[1].recording_id.clone(),
                    start_s: w[1].start_s,
                });
            }
        }
        Ok(Self { dataset, entries })
    }

    pub fn entries(&self) -> &[SegmentRecord] {
        &self.entries
    }

    pub fn class_names(&self) -> [&'static str; NUM_CLASSES] {
        EventClass::ALL.map(EventClass::as_str)
    }

    pub fn subjects(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.subject_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn recording_count(&self) -> usize {
        self.entries
            .iter()
            .map(|e| (&e.subject_id, &e.recording_id))
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for e in &self.entries {
            counts[e.label.index()] += 1;
        }
        counts
    }
}

/// Published per-class segment counts (RDA after excluding its noise class).
pub fn published_counts(dataset: DatasetTag) -> Option<[usize; NUM_CLASSES]> {
    match dataset {
        DatasetTag::DpiWatch => Some([68, 123, 71]),
        DatasetTag::Rda => Some([193, 620, 319]),
        _ => None,
    }
}

/// Published recording counts.
pub fn published_recordings(dataset: DatasetTag) -> Option<usize> {
    match dataset {
        DatasetTag::DpiWatch => Some(71),
        DatasetTag::Rda => Some(360),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub dataset: DatasetTag,
    pub recordings: usize,
    pub counts: [usize; NUM_CLASSES],
    pub expected: Option<[usize; NUM_CLASSES]>,
    pub expected_recordings: Option<usize>,
}

/// Compares the manifest's class counts with the published counts for `expected`.
/// Datasets without published counts always pass.
pub fn validate_counts(manifest: &CorpusManifest, expected: DatasetTag) -> Result<CountReport, CorpusError> {
    let counts = manifest.class_counts();
    let published = published_counts(expected);
    if let Some(want) = published {
        let deltas: Vec<(EventClass, i64)> = EventClass::ALL
            .iter()
            .filter_map(|&c| {
                let d = counts[c.index()] as i64 - want[c.index()] as i64;
                (d != 0).then_some((c, d))
            })
            .collect();
        if !deltas.is_empty() {
            return Err(CorpusError::CountMismatch(deltas));
        }
    }
    Ok(CountReport {
        dataset: expected,
        recordings: manifest.recording_count(),
        counts,
        expected: published,
        expected_recordings: published_recordings(expected),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn manifest_with(counts: [usize; 3], dataset: DatasetTag) -> CorpusManifest {
        let mut entries = Vec::new();
        let mut k = 0;
        for c in EventClass::ALL {
            for _ in 0..counts[c.index()] {
                entries.push(SegmentRecord {
                    path: format!("S{}/r{}.wav", k % 7, k),
                    subject_id: format!("S{}", k % 7),
                    recording_id: format!("r{k}"),
                    start_s: 0.0,
                    end_s: 1.0,
                    label: c,
                    dataset,
                });
                k += 1;
            }
        }
        CorpusManifest::new(dataset, entries).unwrap()
    }

    #[test]
    fn published_counts_pass() {
        assert!(validate_counts(&manifest_with([68, 123, 71], DatasetTag::DpiWatch), DatasetTag::DpiWatch).is_ok());
        assert!(validate_counts(&manifest_with([193, 620, 319], DatasetTag::Rda), DatasetTag::Rda).is_ok());
    }

    #[test]
    fn count_mismatch_reports_delta() {
        let err = validate_counts(&manifest_with([67, 123, 71], DatasetTag::DpiWatch), DatasetTag::DpiWatch);
        assert_eq!(err, Err(CorpusError::CountMismatch(vec![(EventClass::Actuation, -1)])));
    }

    #[test]
    fn duplicates_rejected() {
        let r = SegmentRecord {
            path: "a.wav".into(),
            subject_id: "S1".into(),
            recording_id: "r1".into(),
            start_s: 1.0,
            end_s: 2.0,
            label: EventClass::Actuation,
            dataset: DatasetTag::DpiWatch,
        };
        assert!(matches!(
            CorpusManifest::new(DatasetTag::DpiWatch, vec![r.clone(), r]),
            Err(CorpusError::DuplicateEntry { .. })
        ));
    }

    #[test]
    fn entries_sorted() {
        let mk = |s: &str, r: &str, t: f64| SegmentRecord {
            path: String::new(),
            subject_id: s.into(),
            recording_id: r.into(),
            start_s: t,
            end_s: t + 1.0,
            label: EventClass::Inhalation,
            dataset: DatasetTag::Rda,
        };
        let m = CorpusManifest::new(DatasetTag::Rda, vec![mk("S2", "a", 0.0), mk("S1", "b", 3.0), mk("S1", "b", 1.0)]).unwrap();
        let order: Vec<_> = m.entries().iter().map(|e| (e.subject_id.as_str(), e.start_s)).collect();
        assert_eq!(order, vec![("S1", 1.0), ("S1", 3.0), ("S2", 0.0)]);
        assert_eq!(m.subjects(), vec!["S1".to_string(), "S2".to_string()]);
    }
}
