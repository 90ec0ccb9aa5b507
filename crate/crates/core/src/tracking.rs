//! Recurrence-interval tracking.
//!
//! A token is *activated* at step `t` when its attention in the current row
//! is at least `alpha` (inclusive). On activation the gap since the previous
//! activation is folded into the running maximum before the timestamp moves.

use alloc::vec::Vec;

use crate::record::TokenRecord;
use crate::{Error, Result, Step, TokenIndex};

fn check_row(records: &[TokenRecord], row: &[f64]) -> Result<()> {
    if row.len() > records.len() {
        return Err(Error::IndexOutOfRange {
            index: row.len() - 1,
            len: records.len(),
        });
    }
    if row.len() < records.len() {
        return Err(Error::Dimension {
            expected: records.len(),
            found: row.len(),
        });
    }
    Ok(())
}

/// Folds the interval since the last activation into `mri`, then stamps `ts = t`.
#[inline]
pub fn update_mri(record: &mut TokenRecord, t: Step) {
    debug_assert!(t >= record.ts);
    let interval = t.saturating_sub(record.ts);
    if interval > record.mri {
        record.mri = interval;
    }
    record.ts = t;
}

/// Timestamp-only update. Returns the indices of the activated tokens.
pub fn update_timestamps(
    records: &mut [TokenRecord],
    attn_row: &[f64],
    t: Step,
    alpha: f64,
) -> Result<Vec<TokenIndex>> {
    check_row(records, attn_row)?;
    let mut activated = Vec::new();
    for (rec, &a) in records.iter_mut().zip(attn_row) {
        if a >= alpha {
            rec.ts = t;
            activated.push(rec.index);
        }
    }
    Ok(activated)
}

/// Same as [`update_timestamps`] without collecting the activation set.
/// Returns how many tokens were activated.
pub fn refresh_timestamps(
    records: &mut [TokenRecord],
    attn_row: &[f64],
    t: Step,
    alpha: f64,
) -> Result<usize> {
    check_row(records, attn_row)?;
    let mut n = 0;
    for (rec, &a) in records.iter_mut().zip(attn_row) {
        if a >= alpha {
            rec.ts = t;
            n += 1;
        }
    }
    Ok(n)
}

/// Full tracking step: intervals from the old timestamps, then new timestamps.
/// Returns how many tokens were activated.
pub fn track_step(
    records: &mut [TokenRecord],
    attn_row: &[f64],
    t: Step,
    alpha: f64,
) -> Result<usize> {
    check_row(records, attn_row)?;
    let mut n = 0;
    for (rec, &a) in records.iter_mut().zip(attn_row) {
        if a >= alpha {
            update_mri(rec, t);
            n += 1;
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn threshold_activation() {
        let mut recs = vec![TokenRecord::new(0), TokenRecord::new(1)];
        let act = update_timestamps(&mut recs, &[0.9, 0.1], 7, 0.5).unwrap();
        assert_eq!(act, vec![0]);
        assert_eq!(recs[0].ts, 7);
        assert_eq!(recs[1].ts, 1);
    }

    #[test]
    fn nothing_above_threshold() {
        let mut recs = vec![TokenRecord::new(0), TokenRecord::new(1)];
        let before = recs.clone();
        let act = update_timestamps(&mut recs, &[0.4, 0.6], 3, 0.7).unwrap();
        assert!(act.is_empty());
        assert_eq!(recs, before);
    }

    #[test]
    fn threshold_is_inclusive() {
        // 2000 entries of exactly 0.0005 and alpha = 0.0005.
        let mut recs: Vec<_> = (0..2000).map(TokenRecord::new).collect();
        let row = vec![0.0005; 2000];
        assert_eq!(track_step(&mut recs, &row, 2000, 0.0005).unwrap(), 2000);
        assert!(recs.iter().all(|r| r.ts == 2000));
    }

    #[test]
    fn row_length_mismatch() {
        let mut recs = vec![TokenRecord::new(0)];
        assert!(matches!(
            track_step(&mut recs, &[0.5, 0.5], 1, 0.1),
            Err(Error::IndexOutOfRange { index: 1, len: 1 })
        ));
        assert!(matches!(
            track_step(&mut recs, &[], 1, 0.1),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn mri_examples() {
        let mut r = TokenRecord::new(3);
        for t in [3, 10, 12] {
            update_mri(&mut r, t);
        }
        assert_eq!(r.mri, 7);
        assert_eq!(r.ts, 12);

        let mut r = TokenRecord::new(4);
        update_mri(&mut r, 4);
        assert_eq!(r.mri, 0);

        let mut r = TokenRecord::new(5);
        for t in 5..=8 {
            update_mri(&mut r, t);
        }
        assert_eq!(r.mri, 1);
    }

    fn max_gap(gen: Step, acts: &[Step]) -> Step {
        let mut prev = gen;
        let mut best = 0;
        for &a in acts {
            best = best.max(a - prev);
            prev = a;
        }
        best
    }

    proptest! {
        #[test]
        fn mri_is_max_gap(gen in 0usize..50, gaps in prop::collection::vec(0usize..20, 0..30)) {
            let mut acts = Vec::new();
            let mut t = gen;
            for g in gaps {
                t += g;
                if acts.last() != Some(&t) {
                    acts.push(t);
                }
            }
            let mut r = TokenRecord::new(gen);
            let mut prev_mri = 0;
            for &a in &acts {
                update_mri(&mut r, a);
                prop_assert!(r.mri >= prev_mri);
                prev_mri = r.mri;
            }
            prop_assert_eq!(r.mri, max_gap(gen, &acts));
        }

        #[test]
        fn sub_threshold_step_is_identity(
            n in 1usize..40,
            ts_shift in prop::collection::vec(0usize..5, 40),
            row in prop::collection::vec(0.0f64..0.2, 40),
        ) {
            let mut recs: Vec<_> = (0..n)
                .map(|i| TokenRecord { index: i, gen_step: i, ts: i + ts_shift[i], mri: ts_shift[i] })
                .collect();
            let before = recs.clone();
            prop_assert_eq!(track_step(&mut recs, &row[..n], 100, 0.25).unwrap(), 0);
            prop_assert_eq!(recs, before);
        }
    }
}
