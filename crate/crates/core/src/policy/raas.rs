use crate::cache::CacheState;
use crate::config::{PolicyKind, TieBreak};
use crate::policy::{
    check_step, evict_positions, weakest_positions, Counters, EvictionDecision, Key, Policy,
};
use crate::tracking::refresh_timestamps;
use crate::{Result, Step};

/// Timestamp recency: tokens are stamped whenever their attention reaches
/// `alpha`; the non-recent token with the oldest stamp is evicted.
#[derive(Debug, Clone)]
pub struct Raas {
    state: CacheState,
    budget: usize,
    recent: usize,
    alpha: f64,
    tie: TieBreak,
    counters: Counters,
}

impl Raas {
    pub fn new(budget: usize, recent: usize, alpha: f64, tie: TieBreak, prompt_len: usize) -> Self {
        debug_assert!(recent < budget);
        Raas {
            state: CacheState::with_prompt(prompt_len),
            budget,
            recent,
            alpha,
            tie,
            counters: Counters::default(),
        }
    }
}

impl Policy for Raas {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Raas
    }

    fn step(&mut self, row: &[f64], t: Step) -> Result<Option<EvictionDecision>> {
        check_step(&self.state, row, t)?;
        self.state.push(t);
        refresh_timestamps(self.state.records_mut(), row, t, self.alpha)?;
        self.counters.steps += 1;
        let len = self.state.len();
        if len <= self.budget {
            return Ok(None);
        }
        let candidates = 0..len - self.recent;
        let n_candidates = candidates.len() as u64;
        let recs = self.state.records();
        let drop = weakest_positions(candidates, len - self.budget, self.tie, |p| Key {
            score: recs[p].ts as f64,
            ts: recs[p].ts,
            index: recs[p].index,
        });
        let evicted = evict_positions(&mut self.state, None, &drop, t);
        self.counters.eviction_steps += 1;
        self.counters.eviction_scans += 1;
        self.counters.score_evaluations += n_candidates;
        self.counters.evictions += evicted.len() as u64;
        Ok(Some(EvictionDecision {
            step: t,
            retained: self.state.live_vec(),
            evicted,
            scores: None,
        }))
    }

    fn state(&self) -> &CacheState {
        &self.state
    }

    fn counters(&self) -> Counters {
        self.counters
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn evicts_oldest_timestamp() {
        // Tokens 0..3 are the only candidates outside the 8 protected ones.
        let mut p = Raas::new(10, 8, 0.9, TieBreak::NewerWins, 10);
        for (r, ts) in p.state.records_mut().iter_mut().zip([3, 9, 5]) {
            r.ts = ts;
        }
        let d = p.step(&[1.0 / 11.0; 11], 10).unwrap().unwrap();
        assert_eq!(d.evicted, vec![0]);
    }

    #[test]
    fn equal_timestamps_evict_lowest_index() {
        let mut p = Raas::new(3, 1, 0.9, TieBreak::NewerWins, 3);
        for r in p.state.records_mut() {
            r.ts = 2;
        }
        let d = p.step(&[0.25; 4], 3).unwrap().unwrap();
        assert_eq!(d.evicted, vec![0]);
    }

    #[test]
    fn activation_refreshes_timestamp() {
        let mut p = Raas::new(3, 1, 0.3, TieBreak::NewerWins, 3);
        // token 0 is activated at step 3 and survives; token 1 is the oldest stamp.
        let d = p.step(&[0.5, 0.1, 0.2, 0.2], 3).unwrap().unwrap();
        assert_eq!(d.evicted, vec![1]);
    }
}
