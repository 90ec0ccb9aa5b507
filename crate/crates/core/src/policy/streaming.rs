use alloc::vec::Vec;

use crate::cache::CacheState;
use crate::config::PolicyKind;
use crate::policy::{check_step, evict_positions, Counters, EvictionDecision, Policy};
use crate::{Result, Step};

/// Attention sinks plus a sliding window: keeps the first `n_sink` tokens and
/// the `budget - n_sink` most recent ones.
#[derive(Debug, Clone)]
pub struct Streaming {
    state: CacheState,
    budget: usize,
    n_sink: usize,
    counters: Counters,
}

impl Streaming {
    pub fn new(budget: usize, n_sink: usize, prompt_len: usize) -> Self {
        debug_assert!(n_sink < budget);
        Streaming {
            state: CacheState::with_prompt(prompt_len),
            budget,
            n_sink,
            counters: Counters::default(),
        }
    }
}

impl Policy for Streaming {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Streaming
    }

    fn step(&mut self, row: &[f64], t: Step) -> Result<Option<EvictionDecision>> {
        check_step(&self.state, row, t)?;
        self.state.push(t);
        self.counters.steps += 1;
        let len = self.state.len();
        if len <= self.budget {
            return Ok(None);
        }
        // Sinks occupy positions 0..n_sink; the oldest non-sink tokens follow.
        let excess = len - self.budget;
        let drop: Vec<usize> = (self.n_sink..self.n_sink + excess).collect();
        let evicted = evict_positions(&mut self.state, None, &drop, t);
        self.counters.eviction_steps += 1;
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

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    #[test]
    fn sinks_plus_recent() {
        let mut p = Streaming::new(5, 2, 4);
        assert!(p.step(&uniform(5), 4).unwrap().is_none());
        let d = p.step(&uniform(6), 5).unwrap().unwrap();
        assert_eq!(d.evicted, vec![2]);
        let d = p.step(&uniform(6), 6).unwrap().unwrap();
        assert_eq!(d.evicted, vec![3]);
        assert_eq!(d.retained, vec![0, 1, 4, 5, 6]);
    }

    #[test]
    fn no_sinks_is_a_sliding_window() {
        let mut p = Streaming::new(3, 0, 3);
        for t in 3..10 {
            let n = p.state().len() + 1;
            p.step(&uniform(n), t).unwrap();
            assert_eq!(p.state().live_vec(), vec![t - 2, t - 1, t]);
        }
    }
}
