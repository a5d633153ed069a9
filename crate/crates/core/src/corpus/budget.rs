use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;

use crate::audio::LabeledSegment;
use crate::label::{EventClass, NUM_CLASSES};
use crate::rng;

/// Re-finetuning budgets in seconds, largest first (4.5 min down to 15 s).
pub const BUDGET_SCHEDULE_S: [f64; 5] = [270.0, 120.0, 60.0, 30.0, 15.0];

/// Fixed priority order over all items: each class is shuffled with the seed,
/// then classes are interleaved so that item `i` of a class with `n` items sits
/// at relative position `(i + 1/2) / n` (ties broken by class order).
fn priority_order(labels: &[EventClass], seed: u64) -> Vec<usize> {
    let mut by_class: [Vec<usize>; NUM_CLASSES] = Default::default();
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    let mut keyed = Vec::with_capacity(labels.len());
    for class in EventClass::ALL {
        let items = &mut by_class[class.index()];
        items.shuffle(&mut rng::seeded(rng::derive_seed(seed, 0xB0D6_E700 + class.index() as u64)));
        let n = items.len() as u64;
        for (rank, &item) in items.iter().enumerate() {
            keyed.push(((2 * rank as u64 + 1), n, class.index(), item));
        }
    }
    keyed.sort_by(|a, b| match ((a.0 as u128) * (b.1 as u128)).cmp(&((b.0 as u128) * (a.1 as u128))) {
        Ordering::Equal => a.2.cmp(&b.2),
        o => o,
    });
    keyed.into_iter().map(|k| k.3).collect()
}

/// Class-proportional greedy fill up to `budget_s` seconds.
///
/// Items are taken in the seeded priority order while the running total is
/// below the budget, so the result never exceeds the budget by more than one
/// item and a smaller budget always yields a subset of a larger one. Returns
/// indices in ascending order.
pub fn subsample_budget(items: &[(EventClass, f64)], budget_s: f64, seed: u64) -> Vec<usize> {
    let labels: Vec<EventClass> = items.iter().map(|i| i.0).collect();
    let mut total = 0.0;
    let mut chosen = Vec::new();
    for idx in priority_order(&labels, seed) {
        if total >= budget_s {
            break;
        }
        total += items[idx].1;
        chosen.push(idx);
    }
    chosen.sort_unstable();
    chosen
}

/// [`subsample_budget`] over labeled segments, returning clones.
pub fn subsample_segments(segments: &[LabeledSegment], budget_s: f64, seed: u64) -> Vec<LabeledSegment> {
    let items: Vec<(EventClass, f64)> = segments.iter().map(|s| (s.label, s.duration_s())).collect();
    subsample_budget(&items, budget_s, seed).into_iter().map(|i| segments[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pool() -> Vec<(EventClass, f64)> {
        (0..60)
            .map(|i| (EventClass::ALL[i % 3], 0.1 + (i % 7) as f64 * 0.3))
            .collect()
    }

    #[test]
    fn huge_budget_returns_everything() {
        let p = pool();
        assert_eq!(subsample_budget(&p, 1e9, 1), (0..p.len()).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_for_seed() {
        let p = pool();
        assert_eq!(subsample_budget(&p, 10.0, 4), subsample_budget(&p, 10.0, 4));
    }

    #[test]
    fn interleaving_is_proportional() {
        let mut p = vec![(EventClass::Exhalation, 1.0); 40];
        p.extend(vec![(EventClass::Actuation, 1.0); 20]);
        p.extend(vec![(EventClass::Inhalation, 1.0); 20]);
        let chosen = subsample_budget(&p, 20.0, 9);
        let count = |c| chosen.iter().filter(|&&i| p[i].0 == c).count();
        assert_eq!(chosen.len(), 20);
        assert_eq!(count(EventClass::Exhalation), 10);
        assert_eq!(count(EventClass::Actuation), 5);
        assert_eq!(count(EventClass::Inhalation), 5);
    }

    proptest! {
        #[test]
        fn budget_bounds_and_monotone(
            durs in proptest::collection::vec((0usize..3, 0.05f64..3.0), 1..80),
            a in 0.5f64..60.0,
            b in 0.5f64..60.0,
            seed in 0u64..1000,
        ) {
            let items: Vec<_> = durs.iter().map(|&(c, d)| (EventClass::ALL[c], d)).collect();
            let longest = items.iter().map(|i| i.1).fold(0.0, f64::max);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = subsample_budget(&items, lo, seed);
            let large = subsample_budget(&items, hi, seed);
            let total: f64 = small.iter().map(|&i| items[i].1).sum();
            prop_assert!(total <= lo + longest + 1e-12);
            prop_assert!(small.iter().all(|i| large.contains(i)));
        }
    }
}
