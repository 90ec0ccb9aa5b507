use crate::cache::CacheState;
use crate::config::PolicyKind;
use crate::policy::{check_step, Counters, EvictionDecision, Policy};
use crate::{Result, Step};

/// Never evicts. Reference for error and memory.
#[derive(Debug, Clone)]
pub struct FullKv {
    state: CacheState,
    counters: Counters,
}

impl FullKv {
    pub fn new(prompt_len: usize) -> Self {
        FullKv {
            state: CacheState::with_prompt(prompt_len),
            counters: Counters::default(),
        }
    }
}

impl Policy for FullKv {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Full
    }

    fn step(&mut self, row: &[f64], t: Step) -> Result<Option<EvictionDecision>> {
        check_step(&self.state, row, t)?;
        self.state.push(t);
        self.counters.steps += 1;
        Ok(None)
    }

    fn state(&self) -> &CacheState {
        &self.state
    }

    fn counters(&self) -> Counters {
        self.counters
    }
}
