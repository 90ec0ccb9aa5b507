//! Attention traces: per decoding step, per head, the normalized attention
//! row of the current query over every token generated so far.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result, Step, TokenIndex};

/// Format tag written in the header.
pub const FORMAT_TAG: &str = "kvtrace-v1";

/// Row-sum tolerance accepted on read; rows inside it are renormalized.
pub const READ_SUM_TOLERANCE: f64 = 1e-3;

// Rows whose sum is within a few ulps of 1 are not rescaled, so a
// write/read cycle reproduces them exactly.
const RESCALE_SLACK: f64 = 1e-12;

/// Planted recurrence ground truth, one entry per recurring token.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Planted {
    pub tokens: Vec<TokenIndex>,
    pub periods: Vec<usize>,
    pub phases: Vec<usize>,
}

impl Planted {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Whether planted token number `k` spikes at step `t`.
    pub fn spikes_at(&self, k: usize, t: Step) -> bool {
        let gen = self.tokens[k];
        t >= gen && (t - gen) % self.periods[k] == self.phases[k]
    }

    /// First spike of planted token number `k` strictly after step `t`.
    pub fn next_spike_after(&self, k: usize, t: Step) -> Step {
        let gen = self.tokens[k];
        let (p, phase) = (self.periods[k], self.phases[k]);
        let first = gen + phase;
        if t < first {
            return first;
        }
        let cycles = (t - first) / p + 1;
        first + cycles * p
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TraceHeader {
    pub num_heads: usize,
    pub head_dim: Option<usize>,
    pub prompt_len: usize,
    pub provenance: String,
    pub planted: Option<Planted>,
    /// Value vectors of the prompt tokens, `[head][token][dim]`. Optional
    /// even when `head_dim` is set.
    pub prompt_values: Option<Vec<Vec<Vec<f64>>>>,
}

/// One decoding step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepRecord {
    pub t: Step,
    /// `[head][token]`, each row of length `t + 1`.
    pub attn: Vec<Vec<f64>>,
    /// `[head][dim]`: value vector of token `t`.
    pub value: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
}

impl Trace {
    /// Sequence length after the last step.
    pub fn final_len(&self) -> usize {
        self.header.prompt_len + self.steps.len()
    }

    pub fn num_heads(&self) -> usize {
        self.header.num_heads
    }

    /// Whether every token, prompt included, has a value vector. A trace
    /// may set `head_dim` without prompt values; replay then falls back to
    /// weight-space error.
    pub fn has_values(&self) -> bool {
        self.header.head_dim.is_some()
            && (self.header.prompt_len == 0 || self.header.prompt_values.is_some())
    }

    /// Value vectors of head `head` indexed by token, or `None` when the
    /// trace carries no values.
    pub fn value_table(&self, head: usize) -> Option<Vec<&[f64]>> {
        if !self.has_values() {
            return None;
        }
        let mut table = Vec::with_capacity(self.final_len());
        if let Some(pv) = &self.header.prompt_values {
            table.extend(pv[head].iter().map(|v| v.as_slice()));
        }
        for s in &self.steps {
            table.push(s.value.as_ref()?[head].as_slice());
        }
        Some(table)
    }

    /// Checks every structural invariant. Rows must sum to 1 within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        self.validate_header()?;
        for (k, step) in self.steps.iter().enumerate() {
            self.validate_step(k, step)?;
            for (h, row) in step.attn.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > tol {
                    return Err(Error::Normalization {
                        step: step.t,
                        head: h,
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    /// Validates with the read tolerance and rescales each row to sum to 1.
    /// Rows already normalized to rounding precision are left bit-for-bit.
    pub fn validate_and_normalize(&mut self) -> Result<()> {
        self.validate(READ_SUM_TOLERANCE)?;
        for step in &mut self.steps {
            for row in &mut step.attn {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > RESCALE_SLACK {
                    row.iter_mut().for_each(|a| *a /= sum);
                }
            }
        }
        Ok(())
    }

    fn validate_header(&self) -> Result<()> {
        let h = &self.header;
        if h.num_heads == 0 {
            return Err(Error::Header("num_heads must be at least 1".into()));
        }
        if h.head_dim == Some(0) {
            return Err(Error::Header("head_dim must be at least 1".into()));
        }
        if let Some(p) = &h.planted {
            if p.periods.len() != p.tokens.len() || p.phases.len() != p.tokens.len() {
                return Err(Error::Header(
                    "planted tokens, periods and phases differ in length".into(),
                ));
            }
            if p.periods.contains(&0) {
                return Err(Error::Header("planted periods must be positive".into()));
            }
        }
        match (h.head_dim, &h.prompt_values) {
            (None, Some(_)) => Err(Error::Header("prompt_values without head_dim".into())),
            (Some(d), Some(pv)) => {
                let ok = pv.len() == h.num_heads
                    && pv
                        .iter()
                        .all(|head| head.len() == h.prompt_len && head.iter().all(|v| v.len() == d));
                if ok {
                    Ok(())
                } else {
                    Err(Error::Header(format!(
                        "prompt_values must have shape [{}][{}][{d}]",
                        h.num_heads, h.prompt_len
                    )))
                }
            }
            _ => Ok(()),
        }
    }

    fn validate_step(&self, k: usize, step: &StepRecord) -> Result<()> {
        let h = &self.header;
        let expected_t = h.prompt_len + k;
        if step.t != expected_t {
            return Err(Error::StepOrder {
                expected: expected_t,
                found: step.t,
            });
        }
        if step.attn.len() != h.num_heads {
            return Err(Error::HeadCount {
                step: step.t,
                expected: h.num_heads,
                found: step.attn.len(),
            });
        }
        for (head, row) in step.attn.iter().enumerate() {
            if row.len() != step.t + 1 {
                return Err(Error::RowLength {
                    step: step.t,
                    head,
                    expected: step.t + 1,
                    found: row.len(),
                });
            }
            if let Some((index, &value)) = row
                .iter()
                .enumerate()
                .find(|(_, a)| !(a.is_finite() && **a >= 0.0))
            {
                return Err(Error::InvalidAttention {
                    step: step.t,
                    head,
                    index,
                    value,
                });
            }
        }
        match (h.head_dim, &step.value) {
            (None, None) => Ok(()),
            (None, Some(_)) => Err(Error::Values {
                step: step.t,
                problem: "present but header has no head_dim".into(),
            }),
            (Some(_), None) => Err(Error::Values {
                step: step.t,
                problem: "missing although header sets head_dim".into(),
            }),
            (Some(d), Some(v)) => {
                if v.len() == h.num_heads && v.iter().all(|x| x.len() == d) {
                    Ok(())
                } else {
                    Err(Error::Values {
                        step: step.t,
                        problem: format!("must have shape [{}][{d}]", h.num_heads),
                    })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn tiny() -> Trace {
        Trace {
            header: TraceHeader {
                num_heads: 1,
                prompt_len: 2,
                ..Default::default()
            },
            steps: vec![
                StepRecord { t: 2, attn: vec![vec![0.2, 0.3, 0.5]], value: None },
                StepRecord { t: 3, attn: vec![vec![0.25; 4]], value: None },
                StepRecord { t: 4, attn: vec![vec![0.2; 5]], value: None },
            ],
        }
    }

    #[test]
    fn valid_trace() {
        let t = tiny();
        t.validate(1e-9).unwrap();
        assert_eq!(t.final_len(), 5);
    }

    #[test]
    fn row_length_mismatch() {
        let mut t = tiny();
        t.steps[1].attn[0].pop();
        assert!(matches!(t.validate(1e-3), Err(Error::RowLength { step: 3, .. })));
    }

    #[test]
    fn half_mass_row_is_rejected() {
        let mut t = tiny();
        t.steps[0].attn[0] = vec![0.1, 0.2, 0.2];
        assert!(matches!(
            t.validate_and_normalize(),
            Err(Error::Normalization { step: 2, .. })
        ));
    }

    #[test]
    fn small_drift_is_renormalized() {
        let mut t = tiny();
        t.steps[1].attn[0] = vec![0.2502; 4];
        t.validate_and_normalize().unwrap();
        let s: f64 = t.steps[1].attn[0].iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_gap_is_rejected() {
        let mut t = tiny();
        t.steps.remove(1);
        assert!(matches!(t.validate(1e-3), Err(Error::StepOrder { .. })));
    }

    #[test]
    fn values_need_header_dim() {
        let mut t = tiny();
        t.steps[0].value = Some(vec![vec![1.0]]);
        assert!(matches!(t.validate(1e-3), Err(Error::Values { .. })));
    }

    #[test]
    fn next_spike() {
        let p = Planted { tokens: vec![10], periods: vec![5], phases: vec![2] };
        assert_eq!(p.next_spike_after(0, 0), 12);
        assert_eq!(p.next_spike_after(0, 12), 17);
        assert_eq!(p.next_spike_after(0, 13), 17);
        assert!(p.spikes_at(0, 22));
        assert!(!p.spikes_at(0, 21));
    }
}
