//! Synthetic traces with planted recurrence.
//!
//! A row at step `t` is a recency-decayed background plus a fixed spike mass
//! shared by the planted tokens that recur at `t`. Planted token `r` spikes
//! whenever `(t - r) % period == phase`, so once it has spiked twice its
//! recurrence interval is exactly its period.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::replay::RunReport;
use crate::trace::{Planted, StepRecord, Trace, TraceHeader};
use crate::{Error, Result, Step};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PlantSpec {
    /// Final sequence length, prompt included.
    pub num_tokens: usize,
    pub prompt_len: usize,
    pub num_heads: usize,
    pub head_dim: Option<usize>,
    /// Number of planted recurring tokens.
    pub recurring: usize,
    pub period_min: usize,
    pub period_max: usize,
    /// Attention mass shared by the tokens spiking at a step.
    pub spike_mass: f64,
    /// Exponential recency-decay rate of the background, per step of age.
    pub decay: f64,
    /// Amplitude of the uniform per-token noise added to the background
    /// weights before normalization.
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec {
            num_tokens: 2000,
            prompt_len: 64,
            num_heads: 1,
            head_dim: Some(32),
            recurring: 100,
            period_min: 5,
            period_max: 40,
            spike_mass: 0.5,
            decay: 0.1,
            noise: 0.001,
            seed: 0,
        }
    }
}

impl PlantSpec {
    /// Range of token indices planted tokens are drawn from: decode tokens
    /// late enough to be generated inside the trace and early enough to
    /// spike at least twice whatever their period and phase.
    pub fn plant_range(&self) -> core::ops::Range<usize> {
        let hi = (self.num_tokens + 1).saturating_sub(2 * self.period_max);
        self.prompt_len..hi.max(self.prompt_len)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InfeasibleSpec(m));
        if self.num_tokens <= self.prompt_len {
            return bad(format!(
                "num_tokens {} must exceed prompt_len {}",
                self.num_tokens, self.prompt_len
            ));
        }
        if self.num_heads == 0 {
            return bad("num_heads must be positive".into());
        }
        if self.head_dim == Some(0) {
            return bad("head_dim must be positive".into());
        }
        if self.period_min == 0 || self.period_min > self.period_max {
            return bad(format!(
                "period range {}:{} must satisfy 1 <= min <= max",
                self.period_min, self.period_max
            ));
        }
        if self.period_max >= self.num_tokens {
            return bad(format!(
                "period_max {} must be below num_tokens {}",
                self.period_max, self.num_tokens
            ));
        }
        if !(self.spike_mass > 0.0 && self.spike_mass < 1.0) {
            return bad(format!("spike mass {} must be in (0, 1)", self.spike_mass));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return bad(format!("decay {} must be finite and >= 0", self.decay));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise {} must be finite and >= 0", self.noise));
        }
        let room = self.plant_range().len();
        if self.recurring > room {
            return bad(format!(
                "{} recurring tokens requested but only {room} positions can spike twice",
                self.recurring
            ));
        }
        Ok(())
    }
}

/// Generates a trace from `spec`. Deterministic in `spec.seed`.
pub fn generate(spec: &PlantSpec) -> Result<Trace> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let range = spec.plant_range();
    let mut tokens = rand::seq::index::sample(&mut rng, range.len(), spec.recurring).into_vec();
    tokens.sort_unstable();
    tokens.iter_mut().for_each(|i| *i += range.start);
    let periods: Vec<usize> = tokens
        .iter()
        .map(|_| rng.random_range(spec.period_min..=spec.period_max))
        .collect();
    let phases: Vec<usize> = periods.iter().map(|&p| rng.random_range(0..p)).collect();
    let planted = Planted {
        tokens,
        periods,
        phases,
    };

    let prompt_values = spec.head_dim.map(|d| {
        (0..spec.num_heads)
            .map(|_| (0..spec.prompt_len).map(|_| unit_gaussian(&mut rng, d)).collect())
            .collect()
    });

    let recency: Vec<f64> = (0..spec.num_tokens)
        .map(|age| libm::exp(-spec.decay * age as f64))
        .collect();
    let mut spiking = Vec::with_capacity(planted.len());
    let mut steps = Vec::with_capacity(spec.num_tokens - spec.prompt_len);
    for t in spec.prompt_len..spec.num_tokens {
        spiking.clear();
        spiking.extend(
            (0..planted.len())
                .filter(|&k| planted.spikes_at(k, t))
                .map(|k| planted.tokens[k]),
        );
        let (background, share) = if spiking.is_empty() {
            (1.0, 0.0)
        } else {
            (1.0 - spec.spike_mass, spec.spike_mass / spiking.len() as f64)
        };
        let mut attn = Vec::with_capacity(spec.num_heads);
        let mut value = spec.head_dim.map(|_| Vec::with_capacity(spec.num_heads));
        for _ in 0..spec.num_heads {
            let mut row: Vec<f64> = (0..=t)
                .map(|i| recency[t - i] + spec.noise * rng.random::<f64>())
                .collect();
            let z: f64 = row.iter().sum();
            let scale = background / z;
            row.iter_mut().for_each(|a| *a *= scale);
            for &i in &spiking {
                row[i] += share;
            }
            attn.push(row);
            if let (Some(v), Some(d)) = (value.as_mut(), spec.head_dim) {
                v.push(unit_gaussian(&mut rng, d));
            }
        }
        steps.push(StepRecord { t, attn, value });
    }

    Ok(Trace {
        header: TraceHeader {
            num_heads: spec.num_heads,
            head_dim: spec.head_dim,
            prompt_len: spec.prompt_len,
            provenance: format!(
                "synthetic: tokens={} prompt={} heads={} recurring={} period={}:{} spike={} decay={} noise={} seed={}",
                spec.num_tokens,
                spec.prompt_len,
                spec.num_heads,
                spec.recurring,
                spec.period_min,
                spec.period_max,
                spec.spike_mass,
                spec.decay,
                spec.noise,
                spec.seed
            ),
            planted: Some(planted),
            prompt_values,
        },
        steps,
    })
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// How often a policy still held planted tokens when they next spiked.
///
/// For every decision step `d <= horizon` of every policy instance, looks at
/// the planted tokens generated by `d` whose next spike `s > d` falls inside
/// the trace and counts those not evicted before `s`. The per-decision
/// fractions are averaged per instance, then across instances. An instance
/// that never evicted scores 1.
pub fn planted_recall(report: &RunReport, trace: &Trace, horizon: Step) -> Result<f64> {
    let planted = trace.header.planted.as_ref().ok_or(Error::MissingPlanted)?;
    let Some(last) = trace.steps.last().map(|s| s.t) else {
        return Ok(1.0);
    };
    let n_states = report.decisions.len();
    if n_states == 0 {
        return Ok(1.0);
    }
    let mut total = 0.0;
    for (decisions, evicted) in report.decisions.iter().zip(&report.evicted_at) {
        let evicted_step = |tok: usize| {
            evicted
                .binary_search_by_key(&tok, |&(i, _)| i)
                .ok()
                .map(|pos| evicted[pos].1)
        };
        let mut sum = 0.0;
        let mut counted = 0usize;
        for &d in decisions.iter().filter(|&&d| d <= horizon) {
            let mut due = 0usize;
            let mut kept = 0usize;
            for (k, &tok) in planted.tokens.iter().enumerate() {
                if tok > d {
                    break;
                }
                let s = planted.next_spike_after(k, d);
                if s > last {
                    continue;
                }
                due += 1;
                if evicted_step(tok).is_none_or(|e| e >= s) {
                    kept += 1;
                }
            }
            if due > 0 {
                sum += kept as f64 / due as f64;
                counted += 1;
            }
        }
        total += if counted == 0 { 1.0 } else { sum / counted as f64 };
    }
    Ok(total / n_states as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PlantSpec {
        PlantSpec {
            num_tokens: 200,
            prompt_len: 8,
            num_heads: 2,
            head_dim: Some(4),
            recurring: 10,
            period_min: 3,
            period_max: 12,
            seed: 3,
            ..PlantSpec::default()
        }
    }

    #[test]
    fn rows_are_normalized() {
        let trace = generate(&small()).unwrap();
        trace.validate(1e-9).unwrap();
        assert_eq!(trace.steps.len(), 192);
        assert_eq!(trace.final_len(), 200);
        for s in &trace.steps {
            for row in &s.attn {
                assert!(row.iter().all(|&a| a >= 0.0));
            }
            for v in s.value.as_ref().unwrap() {
                let n: f64 = v.iter().map(|x| x * x).sum();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = PlantSpec { seed: 4, ..small() };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn planted_tokens_spike_twice() {
        let spec = small();
        let trace = generate(&spec).unwrap();
        let p = trace.header.planted.as_ref().unwrap();
        assert_eq!(p.len(), 10);
        for k in 0..p.len() {
            assert!(p.tokens[k] >= spec.prompt_len);
            assert!((spec.period_min..=spec.period_max).contains(&p.periods[k]));
            assert!(p.phases[k] < p.periods[k]);
            let spikes = (p.tokens[k]..spec.num_tokens)
                .filter(|&t| p.spikes_at(k, t))
                .count();
            assert!(spikes >= 2);
        }
    }

    #[test]
    fn infeasible_specs() {
        let too_many = PlantSpec {
            recurring: 1000,
            ..small()
        };
        assert!(matches!(generate(&too_many), Err(Error::InfeasibleSpec(_))));
        let reversed = PlantSpec {
            period_min: 50,
            period_max: 10,
            ..small()
        };
        assert!(generate(&reversed).is_err());
        let no_steps = PlantSpec {
            num_tokens: 8,
            ..small()
        };
        assert!(generate(&no_steps).is_err());
    }

    #[test]
    fn spike_mass_is_split() {
        let spec = PlantSpec {
            num_tokens: 60,
            prompt_len: 4,
            num_heads: 1,
            head_dim: None,
            recurring: 2,
            period_min: 5,
            period_max: 5,
            noise: 0.0,
            ..PlantSpec::default()
        };
        let trace = generate(&spec).unwrap();
        let p = trace.header.planted.clone().unwrap();
        for s in &trace.steps {
            let n = (0..2).filter(|&k| p.spikes_at(k, s.t)).count();
            for k in 0..2 {
                if p.spikes_at(k, s.t) {
                    assert!(s.attn[0][p.tokens[k]] >= 0.5 / n as f64);
                }
            }
        }
    }

    #[test]
    fn next_spike_matches_scan() {
        let trace = generate(&small()).unwrap();
        let p = trace.header.planted.as_ref().unwrap();
        for k in 0..p.len() {
            for t in 0..200 {
                let brute = (t + 1..).find(|&s| p.spikes_at(k, s)).unwrap();
                assert_eq!(p.next_spike_after(k, t), brute);
            }
        }
    }
}
