use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::ModelError;
use crate::rng;

/// Span masking over `frames` positions.
///
/// Every position that leaves room for a full span (`0..=frames - span`) starts
/// a span of `span` frames with probability `prob`; overlapping spans merge.
/// When no span is drawn, one start is chosen uniformly so at least one span
/// is always masked.
pub fn mask_spans(frames: usize, prob: f64, span: usize, seed: u64) -> Result<Vec<bool>, ModelError> {
    if span == 0 || frames < span + 1 {
        return Err(ModelError::SequenceTooShort { frames, required: span + 1 });
    }
    if !(0.0..=1.0).contains(&prob) {
        return Err(ModelError::InvalidConfig("mask probability must lie in [0, 1]"));
    }
    let mut rng = rng::seeded(seed);
    let last_start = frames - span;
    let mut mask = vec![false; frames];
    let mut any = false;
    for start in 0..=last_start {
        if rng.random::<f64>() < prob {
            mask[start..start + span].iter_mut().for_each(|m| *m = true);
            any = true;
        }
    }
    if !any {
        let start = rng.random_range(0..=last_start);
        mask[start..start + span].iter_mut().for_each(|m| *m = true);
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_probability_forces_one_span() {
        let m = mask_spans(100, 0.0, 5, 3).unwrap();
        assert_eq!(m.iter().filter(|&&b| b).count(), 5);
        let first = m.iter().position(|&b| b).unwrap();
        assert!(m[first..first + 5].iter().all(|&b| b));
    }

    #[test]
    fn unit_probability_masks_everything() {
        assert!(mask_spans(100, 1.0, 5, 3).unwrap().iter().all(|&b| b));
    }

    #[test]
    fn too_short_is_an_error() {
        assert_eq!(mask_spans(5, 0.5, 5, 0), Err(ModelError::SequenceTooShort { frames: 5, required: 6 }));
        assert!(mask_spans(6, 0.5, 5, 0).is_ok());
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(mask_spans(300, 0.065, 5, 11).unwrap(), mask_spans(300, 0.065, 5, 11).unwrap());
    }
}
