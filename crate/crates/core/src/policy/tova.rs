use crate::cache::CacheState;
use crate::config::{PolicyKind, TieBreak};
use crate::policy::{
    check_step, evict_positions, weakest_positions, Counters, EvictionDecision, Key, Policy,
};
use crate::{Result, Step};

/// Greedy on current attention: evicts the token with the lowest attention in
/// the current row. No protected window.
#[derive(Debug, Clone)]
pub struct Tova {
    state: CacheState,
    budget: usize,
    tie: TieBreak,
    counters: Counters,
}

impl Tova {
    pub fn new(budget: usize, tie: TieBreak, prompt_len: usize) -> Self {
        Tova {
            state: CacheState::with_prompt(prompt_len),
            budget,
            tie,
            counters: Counters::default(),
        }
    }
}

impl Policy for Tova {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Tova
    }

    fn step(&mut self, row: &[f64], t: Step) -> Result<Option<EvictionDecision>> {
        check_step(&self.state, row, t)?;
        self.state.push(t);
        self.counters.steps += 1;
        let len = self.state.len();
        if len <= self.budget {
            return Ok(None);
        }
        let recs = self.state.records();
        let drop = weakest_positions(0..len, len - self.budget, self.tie, |p| Key {
            score: row[p],
            ts: recs[p].gen_step,
            index: recs[p].index,
        });
        let evicted = evict_positions(&mut self.state, None, &drop, t);
        self.counters.eviction_steps += 1;
        self.counters.eviction_scans += 1;
        self.counters.score_evaluations += len as u64;
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
