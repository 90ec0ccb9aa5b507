//! Retained-token bookkeeping for one policy instance.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::record::TokenRecord;
use crate::{Step, TokenIndex};

/// Live tokens of one head, ordered by index, plus the eviction log.
///
/// Tokens only ever enter at the end (one per decoding step) and leave by
/// eviction, so `records` stays sorted by `index` and the newest tokens are
/// always at the tail.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CacheState {
    records: Vec<TokenRecord>,
    evicted_at: BTreeMap<TokenIndex, Step>,
    next_index: TokenIndex,
}

impl CacheState {
    /// State after prefill: tokens `0..prompt_len`, each with `ts = gen_step`.
    pub fn with_prompt(prompt_len: usize) -> Self {
        CacheState {
            records: (0..prompt_len).map(TokenRecord::new).collect(),
            evicted_at: BTreeMap::new(),
            next_index: prompt_len,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.records.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Index the next pushed token must carry.
    #[inline]
    pub fn next_index(&self) -> TokenIndex {
        self.next_index
    }

    #[inline]
    pub fn records(&self) -> &[TokenRecord] {
        &self.records
    }

    #[inline]
    pub fn records_mut(&mut self) -> &mut [TokenRecord] {
        &mut self.records
    }

    pub fn live_indices(&self) -> impl ExactSizeIterator<Item = TokenIndex> + '_ {
        self.records.iter().map(|r| r.index)
    }

    pub fn live_vec(&self) -> Vec<TokenIndex> {
        self.live_indices().collect()
    }

    pub fn is_live(&self, index: TokenIndex) -> bool {
        self.records
            .binary_search_by_key(&index, |r| r.index)
            .is_ok()
    }

    pub fn record(&self, index: TokenIndex) -> Option<&TokenRecord> {
        self.records
            .binary_search_by_key(&index, |r| r.index)
            .ok()
            .map(|p| &self.records[p])
    }

    pub fn evicted_at(&self) -> &BTreeMap<TokenIndex, Step> {
        &self.evicted_at
    }

    /// Appends the token generated at step `t`.
    pub fn push(&mut self, t: Step) {
        debug_assert_eq!(t, self.next_index);
        self.records.push(TokenRecord::new(t));
        self.next_index = t + 1;
    }

    /// Evicts the token at `pos` and logs it under step `t`.
    pub fn evict_position(&mut self, pos: usize, t: Step) -> TokenIndex {
        let rec = self.records.remove(pos);
        self.evicted_at.insert(rec.index, t);
        rec.index
    }

    /// Keeps positions whose flag in `keep` is set and evicts the rest at
    /// step `t`. Returns the evicted token indices in ascending order.
    pub fn retain_positions(&mut self, keep: &[bool], t: Step) -> Vec<TokenIndex> {
        debug_assert_eq!(keep.len(), self.records.len());
        let mut evicted = Vec::new();
        let mut pos = 0;
        let evicted_at = &mut self.evicted_at;
        self.records.retain(|r| {
            let k = keep[pos];
            pos += 1;
            if !k {
                evicted_at.insert(r.index, t);
                evicted.push(r.index);
            }
            k
        });
        evicted
    }
}

/// Removes the entries of `v` whose `keep` flag is unset, preserving order.
pub(crate) fn retain_aligned<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut pos = 0;
    v.retain(|_| {
        let k = keep[pos];
        pos += 1;
        k
    });
}
