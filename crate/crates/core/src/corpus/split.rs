use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::label::{EventClass, NUM_CLASSES};
use crate::math;
use crate::rng;

/// Subject-level partition into training, validation and test subjects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl SplitPlan {
    pub fn is_disjoint(&self) -> bool {
        self.train.is_disjoint(&self.validation)
            && self.train.is_disjoint(&self.test)
            && self.validation.is_disjoint(&self.test)
    }

    pub fn subjects(&self) -> BTreeSet<String> {
        self.train.iter().chain(&self.validation).chain(&self.test).cloned().collect()
    }
}

fn sorted_subjects(subjects: &[String]) -> Vec<String> {
    subjects.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Hold-Out split over lexicographically ordered subjects.
///
/// The last subject is the test subject; the others are divided into a
/// leading training block and a following validation block, with the larger
/// half going to training (7 subjects give 3 / 3 / 1, 3 subjects give 1 / 1 / 1).
pub fn split_holdout(subjects: &[String]) -> Result<SplitPlan, CorpusError> {
    let ordered = sorted_subjects(subjects);
    let n = ordered.len();
    if n < 3 {
        return Err(CorpusError::TooFewSubjects(n));
    }
    let rest = n - 1;
    let n_train = rest.div_ceil(2);
    Ok(SplitPlan {
        train: ordered[..n_train].iter().cloned().collect(),
        validation: ordered[n_train..rest].iter().cloned().collect(),
        test: ordered[rest..].iter().cloned().collect(),
    })
}

/// One leave-one-subject-out fold per subject. In fold `i` subject `i` is the
/// test subject, the non-test subject at position `i mod (n - 1)` validates,
/// and the rest train.
pub fn make_loso_folds(subjects: &[String]) -> Result<Vec<SplitPlan>, CorpusError> {
    let ordered = sorted_subjects(subjects);
    let n = ordered.len();
    if n < 3 {
        return Err(CorpusError::TooFewSubjects(n));
    }
    Ok((0..n)
        .map(|i| {
            let others: Vec<&String> = ordered.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, s)| s).collect();
            let v = i % others.len();
            SplitPlan {
                train: others.iter().enumerate().filter(|&(j, _)| j != v).map(|(_, s)| (*s).clone()).collect(),
                validation: core::iter::once(others[v].clone()).collect(),
                test: core::iter::once(ordered[i].clone()).collect(),
            }
        })
        .collect())
}

/// Segment-level split (indices into the input) used for corpora that only train.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratifiedSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Per class, shuffles with `seed` and sends `round(train_frac * n)` items to
/// training, clamped so both sides keep at least one item.
pub fn split_stratified(labels: &[EventClass], train_frac: f64, seed: u64) -> Result<StratifiedSplit, CorpusError> {
    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for class in EventClass::ALL {
        let items = &mut by_class[class.index()];
        let n = items.len();
        if n < 2 {
            return Err(CorpusError::ClassTooSmall(class));
        }
        items.shuffle(&mut rng::seeded(rng::derive_seed(seed, class.index() as u64)));
        let n_train = (math::round(train_frac * n as f64) as usize).clamp(1, n - 1);
        train.extend_from_slice(&items[..n_train]);
        validation.extend_from_slice(&items[n_train..]);
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok(StratifiedSplit { train, validation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec;

    fn subjects(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("S{i}")).collect()
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| String::from(*s)).collect()
    }

    #[test]
    fn holdout_seven_subjects() {
        let plan = split_holdout(&subjects(7)).unwrap();
        assert_eq!(plan.train, set(&["S1", "S2", "S3"]));
        assert_eq!(plan.validation, set(&["S4", "S5", "S6"]));
        assert_eq!(plan.test, set(&["S7"]));
    }

    #[test]
    fn holdout_minimal_and_too_few() {
        let plan = split_holdout(&subjects(3)).unwrap();
        assert_eq!((plan.train, plan.validation, plan.test), (set(&["S1"]), set(&["S2"]), set(&["S3"])));
        assert_eq!(split_holdout(&subjects(2)), Err(CorpusError::TooFewSubjects(2)));
    }

    #[test]
    fn loso_folds_cover_every_subject_once() {
        let folds = make_loso_folds(&subjects(7)).unwrap();
        assert_eq!(folds.len(), 7);
        for (i, f) in folds.iter().enumerate() {
            assert_eq!(f.test, set(&[format!("S{}", i + 1).as_str()]));
            assert_eq!(f.train.len(), 5);
            assert_eq!(f.validation.len(), 1);
            assert!(f.is_disjoint());
        }
        assert_eq!(make_loso_folds(&subjects(3)).unwrap().len(), 3);
        assert!(make_loso_folds(&subjects(2)).is_err());
    }

    #[test]
    fn stratified_counts() {
        let mut labels = vec![EventClass::Exhalation; 620];
        labels.extend(vec![EventClass::Actuation; 10]);
        labels.extend(vec![EventClass::Inhalation; 2]);
        let split = split_stratified(&labels, 0.8, 3).unwrap();
        let count = |idx: &[usize], c| idx.iter().filter(|&&i| labels[i] == c).count();
        assert_eq!(count(&split.train, EventClass::Exhalation), 496);
        assert_eq!(count(&split.validation, EventClass::Exhalation), 124);
        assert_eq!(count(&split.train, EventClass::Actuation), 8);
        assert_eq!(count(&split.validation, EventClass::Actuation), 2);
        assert_eq!(count(&split.validation, EventClass::Inhalation), 1);
        assert_eq!(split, split_stratified(&labels, 0.8, 3).unwrap());
    }

    #[test]
    fn stratified_rejects_tiny_class() {
        let labels = [EventClass::Actuation, EventClass::Actuation, EventClass::Exhalation, EventClass::Exhalation, EventClass::Inhalation];
        assert_eq!(split_stratified(&labels, 0.8, 0), Err(CorpusError::ClassTooSmall(EventClass::Inhalation)));
    }
}
