//! Observational statistics over traces and replay reports.
//!
//! MRI here is computed by a brute-force pass that lists every activation of
//! every token at full visibility. It deliberately shares no code with the
//! tracking module so the two can check each other.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::config::HeadMode;
use crate::replay::RunReport;
use crate::trace::Trace;
use crate::{Error, Result, Step, TokenIndex};

/// Activation steps of every token of one head, in step order. Token `i` at
/// generation `i` is listed only for steps the trace actually covers.
pub fn activation_steps(trace: &Trace, head: usize, alpha: f64) -> Vec<Vec<Step>> {
    let mut acts = vec![Vec::new(); trace.final_len()];
    for step in &trace.steps {
        for (i, &a) in step.attn[head].iter().enumerate() {
            if a >= alpha {
                acts[i].push(step.t);
            }
        }
    }
    acts
}

/// Largest gap between consecutive elements of `gen` followed by `acts`.
pub fn max_gap(gen: Step, acts: &[Step]) -> usize {
    let mut seq = Vec::with_capacity(acts.len() + 1);
    seq.push(gen);
    seq.extend_from_slice(acts);
    seq.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
}

/// Nearest-rank percentile of an ascending slice: the smallest value with at
/// least `q * n` values at or below it. `q` must lie in `(0, 1]`.
pub fn nearest_rank(sorted: &[usize], q: f64) -> Option<usize> {
    if sorted.is_empty() || !(q > 0.0 && q <= 1.0) {
        return None;
    }
    let n = sorted.len();
    let rank = libm::ceil(q * n as f64 - 1e-9).clamp(1.0, n as f64) as usize;
    Some(sorted[rank - 1])
}

/// Full-visibility MRI of every token, per head.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MriHistogram {
    /// `[head][token]`.
    pub mri: Vec<Vec<usize>>,
}

impl MriHistogram {
    pub fn num_heads(&self) -> usize {
        self.mri.len()
    }

    /// `mri -> token count` for one head, or pooled over heads.
    pub fn counts(&self, head: Option<usize>) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        let heads = match head {
            Some(h) => h..h + 1,
            None => 0..self.mri.len(),
        };
        for h in heads {
            for &m in &self.mri[h] {
                *out.entry(m).or_insert(0) += 1;
            }
        }
        out
    }

    /// Ascending MRI values over all heads and tokens.
    pub fn pooled(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.mri.iter().flatten().copied().collect();
        v.sort_unstable();
        v
    }

    /// Ascending MRI values of recurring tokens (`mri > 1`) over all heads.
    pub fn recurring(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.mri.iter().flatten().copied().filter(|&m| m > 1).collect();
        v.sort_unstable();
        v
    }

    /// Nearest-rank percentile over every token of every head.
    pub fn percentile(&self, q: f64) -> Option<usize> {
        nearest_rank(&self.pooled(), q)
    }
}

pub fn mri_histogram(trace: &Trace, alpha: f64) -> MriHistogram {
    let mri = (0..trace.num_heads())
        .map(|h| {
            activation_steps(trace, h, alpha)
                .iter()
                .enumerate()
                .map(|(i, acts)| max_gap(i, acts))
                .collect()
        })
        .collect();
    MriHistogram { mri }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prevalence {
    /// Token-head pairs with `mri > 1`.
    pub recurring: usize,
    /// Token-head pairs activated at least once after generation
    /// (`mri >= 1`). Denominator of `fraction`.
    pub activated: usize,
    /// All token-head pairs. Denominator of `fraction_all`.
    pub total: usize,
    pub fraction: f64,
    pub fraction_all: f64,
}

impl Prevalence {
    pub fn from_histogram(hist: &MriHistogram) -> Self {
        let mut p = Prevalence {
            recurring: 0,
            activated: 0,
            total: 0,
            fraction: 0.0,
            fraction_all: 0.0,
        };
        for &m in hist.mri.iter().flatten() {
            p.total += 1;
            p.activated += (m >= 1) as usize;
            p.recurring += (m > 1) as usize;
        }
        if p.activated > 0 {
            p.fraction = p.recurring as f64 / p.activated as f64;
        }
        if p.total > 0 {
            p.fraction_all = p.recurring as f64 / p.total as f64;
        }
        p
    }
}

pub fn recurrence_prevalence(trace: &Trace, alpha: f64) -> Prevalence {
    Prevalence::from_histogram(&mri_histogram(trace, alpha))
}

/// Observation window from the pooled MRI of recurring tokens (`mri > 1`):
/// the nearest-rank `q` percentile. Tokens that never recur say nothing
/// about how long a window must be to see them come back.
pub fn calibrate_window(histograms: &[MriHistogram], q: f64) -> Result<usize> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::config(alloc::format!("percentile {q} must be in (0, 1]")));
    }
    let mut pooled: Vec<usize> = histograms.iter().flat_map(|h| h.recurring()).collect();
    pooled.sort_unstable();
    nearest_rank(&pooled, q).ok_or(Error::EmptySample)
}

/// Convenience wrapper computing the histograms of `traces` first.
pub fn calibrate_traces(traces: &[Trace], alpha: f64, q: f64) -> Result<usize> {
    let hists: Vec<MriHistogram> = traces.iter().map(|t| mri_histogram(t, alpha)).collect();
    calibrate_window(&hists, q)
}

/// Indices of the `m` largest entries of `row`, lower index first on ties.
fn top_set(row: &[f64], m: usize) -> Vec<TokenIndex> {
    let mut idx: Vec<TokenIndex> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx.sort_unstable();
    idx
}

fn jaccard(a: &[TokenIndex], b: &[TokenIndex]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Jaccard overlap of the top-`ceil(k * n)` tokens by attention at steps
/// `t1` and `t2`, both rows cut to their common prefix of `n` tokens,
/// averaged over heads.
pub fn topk_overlap(trace: &Trace, k_fraction: f64, t1: Step, t2: Step) -> Result<f64> {
    if !(k_fraction > 0.0 && k_fraction <= 1.0) {
        return Err(Error::config(alloc::format!("k fraction {k_fraction} must be in (0, 1]")));
    }
    let first = trace.header.prompt_len;
    let row_of = |t: Step| {
        t.checked_sub(first)
            .and_then(|k| trace.steps.get(k))
            .ok_or(Error::IndexOutOfRange {
                index: t,
                len: trace.final_len(),
            })
    };
    let (s1, s2) = (row_of(t1)?, row_of(t2)?);
    let n = t1.min(t2) + 1;
    let m = (libm::ceil(k_fraction * n as f64 - 1e-9) as usize).clamp(1, n);
    let heads = trace.num_heads();
    let mut sum = 0.0;
    for h in 0..heads {
        let a = top_set(&s1.attn[h][..n], m);
        let b = top_set(&s2.attn[h][..n], m);
        sum += jaccard(&a, &b);
    }
    Ok(sum / heads as f64)
}

/// Pairwise [`topk_overlap`] over `steps`, `[i][j]` for `steps[i], steps[j]`.
pub fn topk_overlap_matrix(trace: &Trace, k_fraction: f64, steps: &[Step]) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![vec![1.0; steps.len()]; steps.len()];
    for i in 0..steps.len() {
        for j in i + 1..steps.len() {
            let v = topk_overlap(trace, k_fraction, steps[i], steps[j])?;
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MemoryCurve {
    pub steps: Vec<Step>,
    /// Live tokens per step, largest over policy instances.
    pub tokens: Vec<usize>,
    /// Key and value bytes held per step, summed over heads.
    pub bytes: Vec<u64>,
    pub peak: u64,
    pub mean: f64,
    pub last: u64,
}

/// Memory held per step for keys and values of `head_dim` elements of
/// `bytes_per_elem` bytes each.
pub fn memory_curve(report: &RunReport, head_dim: usize, bytes_per_elem: usize) -> MemoryCurve {
    let n_heads = report.errors.len();
    let per_token = 2 * head_dim as u64 * bytes_per_elem as u64;
    let n = report.steps.len();
    let mut tokens = Vec::with_capacity(n);
    let mut bytes = Vec::with_capacity(n);
    for k in 0..n {
        tokens.push(report.live_size.iter().map(|s| s[k]).max().unwrap_or(0));
        let held: u64 = (0..n_heads)
            .map(|h| {
                let s = match report.head_mode {
                    HeadMode::PerHead => h,
                    HeadMode::MeanPool => 0,
                };
                report.live_size[s][k] as u64
            })
            .sum();
        bytes.push(held * per_token);
    }
    let peak = bytes.iter().copied().max().unwrap_or(0);
    let mean = if n == 0 {
        0.0
    } else {
        bytes.iter().map(|&b| b as f64).sum::<f64>() / n as f64
    };
    MemoryCurve {
        steps: report.steps.clone(),
        tokens,
        peak,
        mean,
        last: bytes.last().copied().unwrap_or(0),
        bytes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{StepRecord, TraceHeader};

    fn trace_from_rows(prompt_len: usize, rows: Vec<Vec<f64>>) -> Trace {
        Trace {
            header: TraceHeader {
                num_heads: 1,
                prompt_len,
                ..Default::default()
            },
            steps: rows
                .into_iter()
                .enumerate()
                .map(|(k, r)| StepRecord {
                    t: prompt_len + k,
                    attn: vec![r],
                    value: None,
                })
                .collect(),
        }
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(nearest_rank(&[1, 1, 2, 3, 10], 0.8), Some(3));
        assert_eq!(nearest_rank(&[1, 2, 5, 5, 40], 0.8), Some(5));
        assert_eq!(nearest_rank(&[1, 2, 5, 5, 40], 1.0), Some(40));
        assert_eq!(nearest_rank(&[7], 0.01), Some(7));
        assert_eq!(nearest_rank(&[], 0.5), None);
        assert_eq!(nearest_rank(&[1], 0.0), None);
    }

    #[test]
    fn max_gap_examples() {
        assert_eq!(max_gap(3, &[3, 10, 12]), 7);
        assert_eq!(max_gap(5, &[5, 6, 7, 8]), 1);
        assert_eq!(max_gap(4, &[]), 0);
    }

    #[test]
    fn newest_token_only_never_recurs() {
        let rows = (1..6)
            .map(|t| {
                let mut r = vec![0.0; t + 1];
                r[t] = 1.0;
                r
            })
            .collect();
        let trace = trace_from_rows(1, rows);
        let hist = mri_histogram(&trace, 0.5);
        assert!(hist.mri[0].iter().all(|&m| m == 0));
        let p = recurrence_prevalence(&trace, 0.5);
        assert_eq!(p.recurring, 0);
        assert_eq!(p.fraction, 0.0);
        assert_eq!(calibrate_window(&[hist], 0.8), Err(Error::EmptySample));
    }

    #[test]
    fn overlap_of_identical_prefix_rows() {
        let rows = vec![vec![0.5, 0.3, 0.2], vec![0.4, 0.3, 0.2, 0.1]];
        let trace = trace_from_rows(2, rows);
        assert_eq!(topk_overlap(&trace, 0.5, 2, 2).unwrap(), 1.0);
        assert_eq!(topk_overlap(&trace, 0.5, 2, 3).unwrap(), 1.0);
        let rows = vec![vec![0.5, 0.3, 0.2], vec![0.1, 0.2, 0.3, 0.4]];
        let trace = trace_from_rows(2, rows);
        // top-2 of {0,1,2}: {0,1} vs {1,2}
        assert!((topk_overlap(&trace, 0.5, 2, 3).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(topk_overlap(&trace, 0.5, 0, 3).is_err());
    }

    #[test]
    fn calibration_pools_recurring_tokens() {
        let a = MriHistogram {
            mri: vec![vec![0, 1, 2, 5, 5, 40, 3]],
        };
        // recurring: 2, 3, 5, 5, 40
        assert_eq!(calibrate_window(std::slice::from_ref(&a), 0.8), Ok(5));
        assert_eq!(calibrate_window(&[a.clone(), a.clone()], 0.8), Ok(5));
        assert_eq!(calibrate_window(std::slice::from_ref(&a), 1.0), Ok(40));
        assert!(calibrate_window(&[], 0.8).is_err());
        assert!(calibrate_window(&[a], 1.5).is_err());
    }
}
