use crate::{Step, TokenIndex};

/// Per-token recurrence state.
///
/// `ts` is the step of the most recent activation (attention at or above the
/// threshold) and starts at `gen_step`. `mri` is the longest gap observed
/// between consecutive activations; it stays 0 until the token is activated
/// at some step after its generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TokenRecord {
    pub index: TokenIndex,
    pub gen_step: Step,
    pub ts: Step,
    pub mri: Step,
}

impl TokenRecord {
    /// A freshly created token: activated "at birth", no interval observed.
    pub fn new(index: TokenIndex) -> Self {
        TokenRecord {
            index,
            gen_step: index,
            ts: index,
            mri: 0,
        }
    }

    /// Steps since the last activation.
    #[inline]
    pub fn elapsed(&self, t: Step) -> Step {
        t.saturating_sub(self.ts)
    }
}
