//! Eviction policies.
//!
//! Every policy owns the [`CacheState`] of one head. At each decoding step it
//! receives the attention row of the current query over its live tokens, in
//! live order, with the newly generated token appended last. It may return an
//! [`EvictionDecision`]; evicted tokens are gone for good.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Range;

use crate::cache::CacheState;
use crate::config::{PolicyConfig, PolicyKind, TieBreak};
use crate::{Error, Result, Step, TokenIndex};

mod full;
mod h2o;
mod lazy;
mod raas;
mod streaming;
mod tova;

pub use full::FullKv;
pub use h2o::H2o;
pub use lazy::LazyEviction;
pub use raas::Raas;
pub use streaming::Streaming;
pub use tova::Tova;

/// Outcome of an eviction at step `step` for one head.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvictionDecision {
    pub step: Step,
    pub retained: Vec<TokenIndex>,
    pub evicted: Vec<TokenIndex>,
    /// Scores of the ranked candidates, when the policy computes any.
    pub scores: Option<Vec<(TokenIndex, f64)>>,
}

/// Work counters, used to compare eviction cost across policies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Counters {
    /// Decoding steps observed.
    pub steps: u64,
    /// Steps on which at least one token was evicted.
    pub eviction_steps: u64,
    /// Batched top-k selections (lagged eviction).
    pub topk_selections: u64,
    /// Per-step linear scans for the weakest candidate.
    pub eviction_scans: u64,
    /// Candidate evaluations across all selections and scans.
    pub score_evaluations: u64,
    /// Tokens evicted.
    pub evictions: u64,
}

impl core::ops::AddAssign for Counters {
    fn add_assign(&mut self, o: Self) {
        self.steps += o.steps;
        self.eviction_steps += o.eviction_steps;
        self.topk_selections += o.topk_selections;
        self.eviction_scans += o.eviction_scans;
        self.score_evaluations += o.score_evaluations;
        self.evictions += o.evictions;
    }
}

pub trait Policy {
    fn kind(&self) -> PolicyKind;

    fn name(&self) -> &'static str {
        self.kind().name()
    }

    /// Processes step `t`. `row` covers the live tokens in order followed by
    /// the new token `t`.
    fn step(&mut self, row: &[f64], t: Step) -> Result<Option<EvictionDecision>>;

    fn state(&self) -> &CacheState;

    fn counters(&self) -> Counters;
}

/// Builds one policy instance for a head, starting from a prefilled prompt.
pub fn build_policy(
    kind: PolicyKind,
    cfg: &PolicyConfig,
    budget: usize,
    prompt_len: usize,
) -> Result<Box<dyn Policy + Send>> {
    cfg.validate(kind, budget)?;
    Ok(match kind {
        PolicyKind::Full => Box::new(FullKv::new(prompt_len)),
        PolicyKind::Streaming => Box::new(Streaming::new(budget, cfg.n_sink, prompt_len)),
        PolicyKind::Tova => Box::new(Tova::new(budget, cfg.tie_break, prompt_len)),
        PolicyKind::H2o => Box::new(H2o::new(budget, cfg.window, cfg.tie_break, prompt_len)),
        PolicyKind::Raas => Box::new(Raas::new(
            budget,
            cfg.window,
            cfg.alpha,
            cfg.tie_break,
            prompt_len,
        )),
        PolicyKind::Lazy => Box::new(LazyEviction::new(cfg, budget, prompt_len)?),
    })
}

/// Ranking key. Under [`TieBreak::NewerWins`], higher score is kept, then
/// later timestamp, then larger index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Key {
    pub score: f64,
    pub ts: Step,
    pub index: TokenIndex,
}

impl Key {
    /// `Greater` means `self` is more worth keeping than `other`.
    #[inline]
    pub fn keep_cmp(&self, other: &Key, tie: TieBreak) -> Ordering {
        let by_score = self.score.total_cmp(&other.score);
        let by_age = (self.ts, self.index).cmp(&(other.ts, other.index));
        match tie {
            TieBreak::NewerWins => by_score.then(by_age),
            TieBreak::OlderWins => by_score.then(by_age.reverse()),
        }
    }
}

/// Checks that `row` covers the live set plus the token generated at `t`.
pub(crate) fn check_step(state: &CacheState, row: &[f64], t: Step) -> Result<()> {
    if t != state.next_index() {
        return Err(Error::StepOrder {
            expected: state.next_index(),
            found: t,
        });
    }
    if row.len() != state.len() + 1 {
        return Err(Error::Dimension {
            expected: state.len() + 1,
            found: row.len(),
        });
    }
    Ok(())
}

/// Positions, ascending, of the `count` weakest candidates in `range`.
pub(crate) fn weakest_positions(
    range: Range<usize>,
    count: usize,
    tie: TieBreak,
    key: impl Fn(usize) -> Key,
) -> Vec<usize> {
    debug_assert!(count <= range.len());
    if count == 1 {
        let mut best = range.start;
        let mut best_key = key(best);
        for pos in range.start + 1..range.end {
            let k = key(pos);
            if k.keep_cmp(&best_key, tie) == Ordering::Less {
                best = pos;
                best_key = k;
            }
        }
        return alloc::vec![best];
    }
    let mut keyed: Vec<(Key, usize)> = range.map(|p| (key(p), p)).collect();
    if count < keyed.len() {
        keyed.select_nth_unstable_by(count, |a, b| a.0.keep_cmp(&b.0, tie));
        keyed.truncate(count);
    }
    let mut out: Vec<usize> = keyed.into_iter().map(|(_, p)| p).collect();
    out.sort_unstable();
    out
}

/// Evicts `positions` (ascending) from `state` and from the aligned
/// side table `aux`, if any. Returns the evicted token indices.
pub(crate) fn evict_positions(
    state: &mut CacheState,
    aux: Option<&mut Vec<f64>>,
    positions: &[usize],
    t: Step,
) -> Vec<TokenIndex> {
    if let [pos] = positions {
        if let Some(aux) = aux {
            aux.remove(*pos);
        }
        return alloc::vec![state.evict_position(*pos, t)];
    }
    let keep = keep_mask(state.len(), positions);
    if let Some(aux) = aux {
        crate::cache::retain_aligned(aux, &keep);
    }
    state.retain_positions(&keep, t)
}

/// Keep-mask of length `len` with `drop` (ascending positions) cleared.
pub(crate) fn keep_mask(len: usize, drop: &[usize]) -> Vec<bool> {
    let mut keep = alloc::vec![true; len];
    for &p in drop {
        keep[p] = false;
    }
    keep
}
