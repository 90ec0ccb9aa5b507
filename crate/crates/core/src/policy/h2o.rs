use alloc::vec::Vec;

use crate::cache::CacheState;
use crate::config::{PolicyKind, TieBreak};
use crate::policy::{
    check_step, evict_positions, weakest_positions, Counters, EvictionDecision, Key, Policy,
};
use crate::{Result, Step};

/// Heavy hitters: evicts the non-recent token with the smallest cumulative
/// attention. The `recent` newest tokens are never evicted.
#[derive(Debug, Clone)]
pub struct H2o {
    state: CacheState,
    /// Cumulative attention, aligned with `state.records()`.
    cumulative: Vec<f64>,
    budget: usize,
    recent: usize,
    tie: TieBreak,
    counters: Counters,
}

impl H2o {
    pub fn new(budget: usize, recent: usize, tie: TieBreak, prompt_len: usize) -> Self {
        debug_assert!(recent < budget);
        H2o {
            state: CacheState::with_prompt(prompt_len),
            cumulative: alloc::vec![0.0; prompt_len],
            budget,
            recent,
            tie,
            counters: Counters::default(),
        }
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }
}

impl Policy for H2o {
    fn kind(&self) -> PolicyKind {
        PolicyKind::H2o
    }

    fn step(&mut self, row: &[f64], t: Step) -> Result<Option<EvictionDecision>> {
        check_step(&self.state, row, t)?;
        self.state.push(t);
        self.cumulative.push(0.0);
        for (c, &a) in self.cumulative.iter_mut().zip(row) {
            *c += a;
        }
        self.counters.steps += 1;
        let len = self.state.len();
        if len <= self.budget {
            return Ok(None);
        }
        let candidates = 0..len - self.recent;
        let n_candidates = candidates.len() as u64;
        let recs = self.state.records();
        let cum = &self.cumulative;
        let drop = weakest_positions(candidates, len - self.budget, self.tie, |p| Key {
            score: cum[p],
            ts: recs[p].gen_step,
            index: recs[p].index,
        });
        let evicted = evict_positions(&mut self.state, Some(&mut self.cumulative), &drop, t);
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
    fn evicts_smallest_cumulative_outside_recent() {
        // Three old tokens, one recent slot, budget 3.
        let mut p = H2o::new(3, 1, TieBreak::NewerWins, 3);
        p.cumulative = vec![1.8, 0.0, 0.4];
        let d = p.step(&[0.2, 0.1, 0.1, 0.6], 3).unwrap().unwrap();
        // sums: [2.0, 0.1, 0.5, 0.6]; token 3 is protected
        assert_eq!(d.evicted, vec![1]);
        assert_eq!(p.cumulative(), &[2.0, 0.5, 0.6]);
    }

    #[test]
    fn equal_sums_evict_oldest() {
        let mut p = H2o::new(3, 1, TieBreak::NewerWins, 3);
        let d = p.step(&[0.25; 4], 3).unwrap().unwrap();
        assert_eq!(d.evicted, vec![0]);
    }

    #[test]
    fn under_budget_no_eviction() {
        let mut p = H2o::new(5, 1, TieBreak::NewerWins, 3);
        assert!(p.step(&[0.25; 4], 3).unwrap().is_none());
    }
}
