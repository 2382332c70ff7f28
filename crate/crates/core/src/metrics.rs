//! Scoring utilities shared by the reconstruction pipeline: contingency
//! tables over index sets and the Matthews correlation coefficient.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Binary-classification counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Contingency {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Contingency {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Merges counts from another table.
    pub fn add(&mut self, other: Contingency) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Counts agreement between a true and a predicted index set over the
/// universe `1..=universe_size`.
pub fn contingency(
    true_set: &BTreeSet<usize>,
    pred_set: &BTreeSet<usize>,
    universe_size: usize,
) -> Contingency {
    let tp = true_set.intersection(pred_set).count() as u64;
    let fp = pred_set.difference(true_set).count() as u64;
    let fn_ = true_set.difference(pred_set).count() as u64;
    let tn = universe_size as u64 - tp - fp - fn_;
    Contingency { tp, tn, fp, fn_ }
}

/// Matthews correlation coefficient. Returns 0 when any factor of the
/// denominator is zero (degenerate table).
pub fn mcc(c: Contingency) -> f64 {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

/// MCC of the concatenated indicator vectors of true vs predicted supports
/// over every record `(q, t)` with `q = 1..=n` and `1 <= t <= up_to`, each
/// over the universe `[n]`. Errors if either map misses a record.
pub fn cumulative_mcc(
    n: usize,
    true_supports: &BTreeMap<(usize, usize), BTreeSet<usize>>,
    pred_supports: &BTreeMap<(usize, usize), BTreeSet<usize>>,
    up_to: usize,
) -> Result<f64> {
    let mut counts = Contingency::default();
    for q in 1..=n {
        for t in 1..=up_to {
            let truth = true_supports
                .get(&(q, t))
                .ok_or(Error::MissingRecord { q, t })?;
            let pred = pred_supports
                .get(&(q, t))
                .ok_or(Error::MissingRecord { q, t })?;
            counts.add(contingency(truth, pred, n));
        }
    }
    Ok(mcc(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn contingency_cases() {
        let s = |v: &[usize]| v.iter().copied().collect::<BTreeSet<_>>();
        assert_eq!(
            contingency(&s(&[1, 2]), &s(&[1, 2]), 4),
            Contingency {
                tp: 2,
                tn: 2,
                fp: 0,
                fn_: 0
            }
        );
        assert_eq!(
            contingency(&s(&[1]), &s(&[2]), 2),
            Contingency {
                tp: 0,
                tn: 0,
                fp: 1,
                fn_: 1
            }
        );
        assert_eq!(
            contingency(&s(&[]), &s(&[]), 3),
            Contingency {
                tp: 0,
                tn: 3,
                fp: 0,
                fn_: 0
            }
        );
    }

    #[test]
    fn mcc_known_values() {
        assert_eq!(
            mcc(Contingency {
                tp: 2,
                tn: 2,
                fp: 0,
                fn_: 0
            }),
            1.0
        );
        assert_eq!(
            mcc(Contingency {
                tp: 1,
                tn: 1,
                fp: 1,
                fn_: 1
            }),
            0.0
        );
        // Degenerate: no positives anywhere.
        assert_eq!(
            mcc(Contingency {
                tp: 0,
                tn: 5,
                fp: 0,
                fn_: 0
            }),
            0.0
        );
        // Total disagreement.
        assert_eq!(
            mcc(Contingency {
                tp: 0,
                tn: 0,
                fp: 3,
                fn_: 4
            }),
            -1.0
        );
    }

    #[test]
    fn cumulative_mcc_exact_recovery_is_one() {
        let s = |v: &[usize]| v.iter().copied().collect::<BTreeSet<_>>();
        let mut truth = BTreeMap::new();
        truth.insert((1, 1), s(&[1, 2]));
        truth.insert((2, 1), s(&[2]));
        let pred = truth.clone();
        assert_eq!(cumulative_mcc(2, &truth, &pred, 1).unwrap(), 1.0);
    }

    #[test]
    fn cumulative_mcc_missing_record_errors() {
        let truth = BTreeMap::new();
        let pred = BTreeMap::new();
        assert!(matches!(
            cumulative_mcc(2, &truth, &pred, 1),
            Err(Error::MissingRecord { q: 1, t: 1 })
        ));
    }

    #[test]
    fn perfect_time_step_only_adds_agreement() {
        let s = |v: &[usize]| v.iter().copied().collect::<BTreeSet<_>>();
        let mut truth = BTreeMap::new();
        let mut pred = BTreeMap::new();
        truth.insert((1, 1), s(&[1, 3]));
        pred.insert((1, 1), s(&[1, 2]));
        truth.insert((1, 2), s(&[2, 3]));
        pred.insert((1, 2), s(&[2, 3]));
        let c1 = contingency(&truth[&(1, 1)], &pred[&(1, 1)], 4);
        let mut c2 = c1;
        c2.add(contingency(&truth[&(1, 2)], &pred[&(1, 2)], 4));
        assert!(c2.tp + c2.tn >= c1.tp + c1.tn);
        assert_eq!(c2.fp, c1.fp);
        assert_eq!(c2.fn_, c1.fn_);
    }

    proptest! {
        #[test]
        fn mcc_is_bounded_and_symmetric(
            tp in 0u64..50, tn in 0u64..50, fp in 0u64..50, fn_ in 0u64..50
        ) {
            let c = Contingency { tp, tn, fp, fn_ };
            let v = mcc(c);
            prop_assert!((-1.0..=1.0).contains(&v));
            // Swapping true and predicted roles transposes the table,
            // swapping FP with FN; the score is unchanged.
            let swapped = Contingency { tp, tn, fp: fn_, fn_: fp };
            prop_assert!((v - mcc(swapped)).abs() < 1e-12);
        }
    }
}
