//! Confusion matrices, per-class recall, UAR, F1 / macro-F1 and the
//! Hold-Out and leave-one-subject-out protocols.
//!
//! A class with no true instances in the evaluated set has undefined recall.
//! It is listed in `excluded_classes` and left out of UAR and macro-F1 rather
//! than counted as zero.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::audio::{LabeledSegment, Waveform};
use crate::corpus::SplitPlan;
use crate::label::{EventClass, NUM_CLASSES};
use crate::math;
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{predicted} predictions for {truth} labels")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("label index {0} is outside the class range")]
    UnknownLabel(usize),
    #[error("no class has true instances")]
    NoTrueInstances,
    #[error("the split selects no test segments")]
    EmptyTestSet,
    #[error("classification failed on segment {index}: {source}")]
    Model { index: usize, source: ModelError },
}

/// Square count matrix; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, counts: vec![0; n * n] }
    }

    /// Builds a matrix from rows of counts.
    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "confusion matrix must be square");
        Self { n, counts: rows.iter().flatten().copied().collect() }
    }

    pub fn from_indices(predicted: &[usize], truth: &[usize], n: usize) -> Result<Self, EvalError> {
        if predicted.len() != truth.len() {
            return Err(EvalError::LengthMismatch { predicted: predicted.len(), truth: truth.len() });
        }
        let mut cm = Self::zeros(n);
        for (&p, &t) in predicted.iter().zip(truth) {
            if p >= n {
                return Err(EvalError::UnknownLabel(p));
            }
            if t >= n {
                return Err(EvalError::UnknownLabel(t));
            }
            cm.counts[t * n + p] += 1;
        }
        Ok(cm)
    }

    pub fn num_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n + predicted]
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i * self.n..(i + 1) * self.n].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.n).map(|i| self.get(i, j)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n).map(|r| r.to_vec()).collect()
    }
}

/// Confusion matrix over the three event classes.
pub fn confusion(predicted: &[EventClass], truth: &[EventClass]) -> Result<ConfusionMatrix, EvalError> {
    let p: Vec<usize> = predicted.iter().map(|c| c.index()).collect();
    let t: Vec<usize> = truth.iter().map(|c| c.index()).collect();
    ConfusionMatrix::from_indices(&p, &t, NUM_CLASSES)
}

/// Recall per class; `None` marks a class with no true instances.
pub fn recall_per_class(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.n)
        .map(|i| {
            let row = cm.row_sum(i);
            (row > 0).then(|| cm.get(i, i) as f64 / row as f64)
        })
        .collect()
}

fn mean_of_included(values: &[Option<f64>]) -> Option<f64> {
    let included: Vec<f64> = values.iter().flatten().copied().collect();
    (!included.is_empty()).then(|| included.iter().sum::<f64>() / included.len() as f64)
}

/// Unweighted average recall over classes with true instances.
pub fn uar(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    mean_of_included(&recall_per_class(cm)).ok_or(EvalError::NoTrueInstances)
}

pub fn precision_per_class(cm: &ConfusionMatrix) -> Vec<f64> {
    (0..cm.n)
        .map(|j| {
            let col = cm.col_sum(j);
            if col == 0 { 0.0 } else { cm.get(j, j) as f64 / col as f64 }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Scores {
    pub per_class: Vec<f64>,
    pub macro_f1: f64,
}

/// Per-class F1 (0 when precision + recall is 0) and their mean over classes with true instances.
pub fn f1_scores(cm: &ConfusionMatrix) -> F1Scores {
    let recall = recall_per_class(cm);
    let precision = precision_per_class(cm);
    let per_class: Vec<f64> = recall
        .iter()
        .zip(&precision)
        .map(|(r, &p)| {
            let r = r.unwrap_or(0.0);
            if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
        })
        .collect();
    let included: Vec<Option<f64>> = recall.iter().zip(&per_class).map(|(r, &f)| r.map(|_| f)).collect();
    F1Scores { macro_f1: mean_of_included(&included).unwrap_or(0.0), per_class }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall: Vec<Option<f64>>,
    pub uar: f64,
    pub f1: Vec<f64>,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    pub n_segments: usize,
    pub excluded_classes: Vec<EventClass>,
}

impl EvalReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self, EvalError> {
        let recall = recall_per_class(&cm);
        let uar = uar(&cm)?;
        let f1 = f1_scores(&cm);
        let excluded_classes = recall
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_none())
            .filter_map(|(i, _)| EventClass::from_index(i))
            .collect();
        Ok(Self {
            recall,
            uar,
            f1: f1.per_class,
            macro_f1: f1.macro_f1,
            n_segments: cm.total() as usize,
            confusion: cm,
            excluded_classes,
        })
    }
}

/// Two-decimal rendering used by the report tables.
pub fn render(value: f64) -> String {
    format!("{value:.2}")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = math::mean_and_sample_std(values);
        Self { mean, std }
    }

    /// Renders as `0.98 ± 0.03`; a deviation below `1e-12` is shown as `± 0`.
    pub fn render(&self) -> String {
        if self.std.abs() < 1e-12 {
            format!("{:.2} ± 0", self.mean)
        } else {
            format!("{:.2} ± {:.2}", self.mean, self.std)
        }
    }
}

/// Per-fold reports with the mean and sample standard deviation of every metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<EvalReport>,
    /// Per class, over the folds in which the class had true instances.
    pub recall: Vec<Option<MeanStd>>,
    pub uar: MeanStd,
    pub macro_f1: MeanStd,
}

impl CvSummary {
    pub fn from_folds(folds: Vec<EvalReport>) -> Self {
        let n_classes = folds.first().map_or(NUM_CLASSES, |f| f.recall.len());
        let recall = (0..n_classes)
            .map(|c| {
                let vals: Vec<f64> = folds.iter().filter_map(|f| f.recall[c]).collect();
                (!vals.is_empty()).then(|| MeanStd::of(&vals))
            })
            .collect();
        let uar = MeanStd::of(&folds.iter().map(|f| f.uar).collect::<Vec<_>>());
        let macro_f1 = MeanStd::of(&folds.iter().map(|f| f.macro_f1).collect::<Vec<_>>());
        Self { folds, recall, uar, macro_f1 }
    }
}

/// Anything that maps a preprocessed waveform to an event class.
pub trait Classifier {
    fn predict(&self, wave: &Waveform) -> Result<EventClass, ModelError>;
}

impl<F> Classifier for F
where
    F: Fn(&Waveform) -> Result<EventClass, ModelError>,
{
    fn predict(&self, wave: &Waveform) -> Result<EventClass, ModelError> {
        self(wave)
    }
}

/// Segments belonging to the given subjects, in input order.
pub fn select_subjects(segments: &[LabeledSegment], subjects: &BTreeSet<String>) -> Vec<LabeledSegment> {
    segments.iter().filter(|s| subjects.contains(&s.subject_id)).cloned().collect()
}

/// Classifies every segment of the split's test subjects.
pub fn evaluate_holdout<C: Classifier + ?Sized>(
    model: &C,
    segments: &[LabeledSegment],
    split: &SplitPlan,
) -> Result<EvalReport, EvalError> {
    let test: Vec<&LabeledSegment> = segments.iter().filter(|s| split.test.contains(&s.subject_id)).collect();
    evaluate_segments(model, test)
}

/// Classifies the given segments and builds the report.
pub fn evaluate_segments<'a, C, I>(model: &C, segments: I) -> Result<EvalReport, EvalError>
where
    C: Classifier + ?Sized,
    I: IntoIterator<Item = &'a LabeledSegment>,
{
    let mut predicted = Vec::new();
    let mut truth = Vec::new();
    for (index, seg) in segments.into_iter().enumerate() {
        predicted.push(model.predict(&seg.wave).map_err(|source| EvalError::Model { index, source })?);
        truth.push(seg.label);
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    EvalReport::from_confusion(confusion(&predicted, &truth)?)
}

#[derive(Debug, thiserror::Error)]
pub enum LosoError<E> {
    #[error("LOSO needs at least 3 folds, got {0}")]
    TooFewFolds(usize),
    #[error("training failed in fold {fold}: {source}")]
    Train { fold: usize, source: E },
    #[error("evaluation failed in fold {fold}: {source}")]
    Eval { fold: usize, source: EvalError },
}

/// Leave-one-subject-out evaluation.
///
/// For each fold, `train` receives only that fold's training and validation
/// segments and returns a fresh classifier, which is then scored on the
/// fold's test subject.
pub fn evaluate_loso<C, E, F>(
    mut train: F,
    segments: &[LabeledSegment],
    folds: &[SplitPlan],
) -> Result<CvSummary, LosoError<E>>
where
    C: Classifier,
    F: FnMut(usize, &[LabeledSegment], &[LabeledSegment]) -> Result<C, E>,
{
    if folds.len() < 3 {
        return Err(LosoError::TooFewFolds(folds.len()));
    }
    let mut reports = Vec::with_capacity(folds.len());
    for (fold, plan) in folds.iter().enumerate() {
        let train_set = select_subjects(segments, &plan.train);
        let val_set = select_subjects(segments, &plan.validation);
        let model = train(fold, &train_set, &val_set).map_err(|source| LosoError::Train { fold, source })?;
        let report = evaluate_holdout(&model, segments, plan).map_err(|source| LosoError::Eval { fold, source })?;
        reports.push(report);
    }
    Ok(CvSummary::from_folds(reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_scaled(recalls_pct: [u64; 3]) -> ConfusionMatrix {
        let rows: Vec<Vec<u64>> = (0..3)
            .map(|i| {
                let mut r = vec![0; 3];
                r[i] = recalls_pct[i];
                r[(i + 1) % 3] = 100 - recalls_pct[i];
                r
            })
            .collect();
        ConfusionMatrix::from_rows(&rows)
    }

    #[test]
    fn perfect_predictions() {
        let truth: Vec<EventClass> = EventClass::ALL.iter().flat_map(|&c| core::iter::repeat_n(c, 10)).collect();
        let cm = confusion(&truth, &truth).unwrap();
        assert_eq!(cm.rows(), vec![vec![10, 0, 0], vec![0, 10, 0], vec![0, 0, 10]]);
        assert_eq!(recall_per_class(&cm), vec![Some(1.0); 3]);
        let f1 = f1_scores(&cm);
        assert_eq!(f1.per_class, vec![1.0; 3]);
        assert_eq!(f1.macro_f1, 1.0);
    }

    #[test]
    fn empty_inputs_and_errors() {
        assert_eq!(confusion(&[], &[]).unwrap().rows(), vec![vec![0; 3]; 3]);
        assert!(matches!(
            confusion(&[EventClass::Actuation], &[]),
            Err(EvalError::LengthMismatch { predicted: 1, truth: 0 })
        ));
        assert_eq!(ConfusionMatrix::from_indices(&[3], &[0], 3), Err(EvalError::UnknownLabel(3)));
        assert_eq!(uar(&ConfusionMatrix::zeros(3)), Err(EvalError::NoTrueInstances));
    }

    #[test]
    fn partial_recall_and_exclusion() {
        let cm = ConfusionMatrix::from_rows(&[vec![2, 1, 0], vec![0, 4, 0], vec![0, 0, 0]]);
        let r = recall_per_class(&cm);
        assert!((r[0].unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r[2], None);
        let report = EvalReport::from_confusion(cm).unwrap();
        assert_eq!(report.excluded_classes, vec![EventClass::Inhalation]);
        assert!((report.uar - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn published_uar_anchors_render() {
        assert_eq!(render(uar(&diag_scaled([100, 96, 97])).unwrap()), "0.98");
        assert_eq!(render(uar(&diag_scaled([52, 68, 42])).unwrap()), "0.54");
    }

    #[test]
    fn two_class_f1() {
        let f1 = f1_scores(&ConfusionMatrix::from_rows(&[vec![2, 1], vec![0, 3]]));
        assert!((f1.per_class[0] - 0.8).abs() < 1e-15);
        assert!((f1.per_class[1] - 6.0 / 7.0).abs() < 1e-15);
        assert!((f1.macro_f1 - 0.5 * (0.8 + 6.0 / 7.0)).abs() < 1e-15);
    }

    #[test]
    fn never_predicted_class_has_zero_f1() {
        let f1 = f1_scores(&ConfusionMatrix::from_rows(&[vec![0, 3, 0], vec![0, 3, 0], vec![0, 0, 3]]));
        assert_eq!(f1.per_class[0], 0.0);
    }

    #[test]
    fn mean_std_rendering() {
        assert_eq!(MeanStd::of(&[0.98; 7]).render(), "0.98 ± 0");
        let m = MeanStd::of(&[1.0, 0.9]);
        assert!((m.mean - 0.95).abs() < 1e-15);
        assert!((m.std - 0.070_710_678_118_654_76).abs() < 1e-12);
        assert_eq!(MeanStd { mean: 0.98, std: 0.03 }.render(), "0.98 ± 0.03");
    }
}
