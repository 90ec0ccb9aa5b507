//! MRI-centric importance scores.
//!
//! `h1` measures how overdue a token is relative to its own recurrence
//! interval; `h2` rewards tokens that have shown a recurrence interval at all.
//! Both are built from a monotone-decreasing map `[0, inf) -> [0, 1]` with
//! value 1 at 0. Sigmoid is the default form; the others are
//!
//! | variant   | f(x)                                   |
//! |-----------|----------------------------------------|
//! | `sigmoid` | `2 / (1 + e^x)`  (= 2σ(-x))            |
//! | `exp`     | `e^-x`                                 |
//! | `tanh`    | `1 - tanh(x)`, evaluated as `2 / (1 + e^2x)` |
//! | `log`     | `1 / (1 + ln(1 + x))`                  |
//! | `inverse` | `1 / (1 + x)`                          |

use crate::config::ScoreVariant;
use crate::record::TokenRecord;
use crate::Step;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScoreParams {
    pub h1: ScoreVariant,
    pub h2: ScoreVariant,
    /// Use `f(mri - 1)` instead of `f(1 / (mri - 1))` for `h2`, which makes
    /// it decreasing in the interval. Off by default.
    pub h2_inverted: bool,
}

/// Applies the decreasing map of `variant` at `x >= 0`.
#[inline]
pub fn decay(variant: ScoreVariant, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    match variant {
        ScoreVariant::Sigmoid => 2.0 / (1.0 + libm::exp(x)),
        ScoreVariant::Exp => libm::exp(-x),
        ScoreVariant::Tanh => 2.0 / (1.0 + libm::exp(2.0 * x)),
        ScoreVariant::Log => 1.0 / (1.0 + libm::log1p(x)),
        ScoreVariant::Inverse => 1.0 / (1.0 + x),
    }
}

/// Recency-versus-interval score, in `(0, 1]`.
///
/// The interval is clamped to at least one step so tokens that never
/// recurred still decay with age. Values that would underflow are held at
/// `f64::MIN_POSITIVE`; ordering among those falls to the tie-break, which
/// already prefers the later timestamp.
#[inline]
pub fn h1_score(variant: ScoreVariant, t: Step, ts: Step, mri: Step) -> f64 {
    let elapsed = t.saturating_sub(ts) as f64;
    let x = elapsed / mri.max(1) as f64;
    decay(variant, x).max(f64::MIN_POSITIVE)
}

/// Interval score, in `[0, 1)`. Zero for `mri` 0 (never re-activated) and
/// for `mri` 1, the limit of `f(1 / (mri - 1))` as `mri -> 1+`.
#[inline]
pub fn h2_score(variant: ScoreVariant, mri: Step, inverted: bool) -> f64 {
    if mri <= 1 {
        return 0.0;
    }
    let gap = (mri - 1) as f64;
    if inverted {
        decay(variant, gap)
    } else {
        decay(variant, 1.0 / gap)
    }
}

/// Combined importance: `h1 + h2` for tokens with a recorded interval,
/// `h1` alone otherwise.
#[inline]
pub fn importance(t: Step, record: &TokenRecord, params: &ScoreParams) -> f64 {
    let h1 = h1_score(params.h1, t, record.ts, record.mri);
    if record.mri == 0 {
        h1
    } else {
        h1 + h2_score(params.h2, record.mri, params.h2_inverted)
    }
}
