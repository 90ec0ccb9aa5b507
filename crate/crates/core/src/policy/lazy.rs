//! Observation-window lagged eviction.
//!
//! Recurrence intervals are tracked on every step. Eviction is only
//! considered every `window` steps, counted from the first decoding step, and
//! only fires when the cache holds more than `budget` tokens. A decision keeps
//! the `window` newest tokens plus the `budget - window` older tokens with the
//! highest importance, so between decisions the cache grows by at most
//! `window - 1` tokens past the budget.

use alloc::vec::Vec;

use crate::cache::CacheState;
use crate::config::{PolicyConfig, PolicyKind, TieBreak};
use crate::policy::{check_step, keep_mask, Counters, EvictionDecision, Key, Policy};
use crate::scoring::{h1_score, h2_score, ScoreParams};
use crate::tracking::track_step;
use crate::{Error, Result, Step};

#[derive(Debug, Clone)]
pub struct LazyEviction {
    state: CacheState,
    budget: usize,
    window: usize,
    alpha: f64,
    score: ScoreParams,
    tie: TieBreak,
    first_step: Step,
    counters: Counters,
    scratch: Vec<(Key, usize)>,
    /// `h2_score` by MRI, NaN until first needed.
    h2_memo: Vec<f64>,
}

impl LazyEviction {
    pub fn new(cfg: &PolicyConfig, budget: usize, prompt_len: usize) -> Result<Self> {
        if cfg.window == 0 || cfg.window >= budget {
            return Err(Error::config(alloc::format!(
                "window ({}) must lie in [1, budget = {budget})",
                cfg.window
            )));
        }
        Ok(LazyEviction {
            state: CacheState::with_prompt(prompt_len),
            budget,
            window: cfg.window,
            alpha: cfg.alpha,
            score: cfg.score,
            tie: cfg.tie_break,
            first_step: prompt_len,
            counters: Counters::default(),
            scratch: Vec::new(),
            h2_memo: Vec::new(),
        })
    }

    /// Whether `t` falls on a window boundary (`first_step + k * window`, `k >= 1`).
    #[inline]
    pub fn is_boundary(&self, t: Step) -> bool {
        t > self.first_step && (t - self.first_step).is_multiple_of(self.window)
    }

    fn decide(&mut self, t: Step) -> EvictionDecision {
        let len = self.state.len();
        let n_old = len - self.window;
        let keep_old = self.budget - self.window;
        let recs = self.state.records();
        let score = self.score;
        let memo = &mut self.h2_memo;
        self.scratch.clear();
        self.scratch.extend(recs[..n_old].iter().enumerate().map(|(p, r)| {
            let h1 = h1_score(score.h1, t, r.ts, r.mri);
            let score = if r.mri == 0 {
                h1
            } else {
                if memo.len() <= r.mri {
                    memo.resize(r.mri + 1, f64::NAN);
                }
                if memo[r.mri].is_nan() {
                    memo[r.mri] = h2_score(score.h2, r.mri, score.h2_inverted);
                }
                h1 + memo[r.mri]
            };
            let key = Key {
                score,
                ts: r.ts,
                index: r.index,
            };
            (key, p)
        }));
        self.counters.score_evaluations += n_old as u64;
        self.counters.topk_selections += 1;

        let scores: Vec<_> = self.scratch.iter().map(|(k, _)| (k.index, k.score)).collect();

        // Weakest first; everything before position `n_evict` goes.
        let n_evict = n_old - keep_old;
        let tie = self.tie;
        if n_evict < n_old {
            self.scratch
                .select_nth_unstable_by(n_evict, |a, b| a.0.keep_cmp(&b.0, tie));
        }
        let mut drop: Vec<usize> = self.scratch[..n_evict].iter().map(|&(_, p)| p).collect();
        drop.sort_unstable();
        let keep = keep_mask(len, &drop);
        let evicted = self.state.retain_positions(&keep, t);
        self.counters.eviction_steps += 1;
        self.counters.evictions += evicted.len() as u64;
        EvictionDecision {
            step: t,
            retained: self.state.live_vec(),
            evicted,
            scores: Some(scores),
        }
    }
}

impl Policy for LazyEviction {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Lazy
    }

    fn step(&mut self, row: &[f64], t: Step) -> Result<Option<EvictionDecision>> {
        check_step(&self.state, row, t)?;
        self.state.push(t);
        track_step(self.state.records_mut(), row, t, self.alpha)?;
        self.counters.steps += 1;
        if self.is_boundary(t) && self.state.len() > self.budget {
            return Ok(Some(self.decide(t)));
        }
        Ok(None)
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
    use crate::config::Budget;
    use alloc::vec;

    fn cfg(window: usize, alpha: f64) -> PolicyConfig {
        PolicyConfig {
            budget: Budget::Absolute(4),
            window,
            alpha,
            ..PolicyConfig::default()
        }
    }

    #[test]
    fn keeps_top_scored_old_tokens_plus_window() {
        // B = 4, W = 2, prompt of 3: the first boundary is t = 5 with 6 live.
        let mut p = LazyEviction::new(&cfg(2, 0.99), 4, 3).unwrap();
        let recs = p.state.records_mut();
        recs[0].mri = 10;
        recs[2].mri = 3;
        assert!(p.step(&[0.0, 0.0, 0.0, 1.0], 3).unwrap().is_none());
        assert!(p.step(&[0.0, 0.0, 0.0, 0.0, 1.0], 4).unwrap().is_none());

        // Hand enumeration at t = 5 over the four tokens outside the window:
        //   0: ts 0, mri 10 -> 2σ(-0.5) + 2σ(-1/9) ≈ 1.6996
        //   1: ts 1, mri 0  -> 2σ(-4)              ≈ 0.04
        //   2: ts 2, mri 3  -> 2σ(-1) + 2σ(-1/2)   ≈ 1.2930
        //   3: ts 3, mri 0  -> 2σ(-2)              ≈ 0.24
        // Top B - W = 2 are tokens 0 and 2.
        let d = p.step(&[0.0, 0.0, 0.0, 0.0, 0.0, 1.0], 5).unwrap().unwrap();
        assert_eq!(d.retained, vec![0, 2, 4, 5]);
        assert_eq!(d.evicted, vec![1, 3]);
        let s = d.scores.unwrap();
        let score = |i: usize| s.iter().find(|(j, _)| *j == i).unwrap().1;
        assert!((score(0) - 1.699_583).abs() < 1e-5, "{}", score(0));
        assert!((score(1) - 0.035_972).abs() < 1e-5, "{}", score(1));
        assert!((score(2) - 1.292_964).abs() < 1e-5, "{}", score(2));
        assert!((score(3) - 0.238_406).abs() < 1e-5, "{}", score(3));
        assert_eq!(p.counters().topk_selections, 1);
    }

    #[test]
    fn at_budget_no_decision() {
        // prompt 1, B = 4, W = 2: boundaries at 3, 5, ...; live is exactly 3 at
        // t = 3 and 5 at t = 5.
        let mut p = LazyEviction::new(&cfg(2, 0.5), 4, 1).unwrap();
        assert!(p.step(&[0.5, 0.5], 1).unwrap().is_none());
        assert!(p.step(&[0.3, 0.3, 0.4], 2).unwrap().is_none());
        assert!(p.step(&[0.25; 4], 3).unwrap().is_none());
        assert_eq!(p.state().len(), 4);
        assert!(p.step(&[0.2; 5], 4).unwrap().is_none());
        assert_eq!(p.state().len(), 5);
        assert!(p.step(&[1.0 / 6.0; 6], 5).unwrap().is_some());
        assert_eq!(p.state().len(), 4);
    }

    #[test]
    fn lagged_between_boundaries() {
        let mut p = LazyEviction::new(&cfg(4, 0.5), 5, 8).unwrap();
        // live 9..=11 on steps 8, 9, 10: none are boundaries (first at 12)
        for t in 8..11 {
            let n = p.state().len() + 1;
            assert!(p.step(&vec![1.0 / n as f64; n], t).unwrap().is_none());
        }
        assert_eq!(p.state().len(), 11);
        let n = p.state().len() + 1;
        assert!(p.step(&vec![1.0 / n as f64; n], 11).unwrap().is_none());
        let n = p.state().len() + 1;
        let d = p.step(&vec![1.0 / n as f64; n], 12).unwrap().unwrap();
        assert_eq!(d.retained.len(), 5);
    }

    #[test]
    fn window_must_be_below_budget() {
        assert!(LazyEviction::new(&cfg(4, 0.5), 4, 0).is_err());
        assert!(LazyEviction::new(&cfg(0, 0.5), 4, 0).is_err());
    }
}
