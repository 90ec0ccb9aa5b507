//! Trace replay.
//!
//! At every step each policy sees the oracle attention row restricted to the
//! tokens it still holds and renormalized, which is what a model running on
//! the compressed cache would compute: renormalizing a subset of softmax
//! probabilities equals a softmax over the retained logits. The full row is
//! used only to measure how far the compressed attention output drifts from
//! the uncompressed one.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::{Budget, HeadMode, PolicyConfig, PolicyKind};
use crate::policy::{build_policy, Counters, Policy};
use crate::trace::Trace;
use crate::{Error, Result, Step, TokenIndex};

/// What the per-step error measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ErrorKind {
    /// Euclidean distance between full and compressed attention outputs.
    #[cfg_attr(feature = "serde", serde(rename = "value-L2"))]
    ValueL2,
    /// Total-variation distance between the full row and the restricted,
    /// renormalized row (zero on evicted tokens). Used when the trace has no
    /// value vectors.
    #[cfg_attr(feature = "serde", serde(rename = "weight-TV"))]
    WeightTv,
}

impl ErrorKind {
    pub fn label(self) -> &'static str {
        match self {
            ErrorKind::ValueL2 => "value-L2",
            ErrorKind::WeightTv => "weight-TV",
        }
    }
}

/// Restricts `row` to `live` and renormalizes it to sum to 1.
pub fn restrict_attention(row: &[f64], live: &[TokenIndex]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(live.len());
    restrict_into(row, live, &mut out)?;
    Ok(out)
}

/// Buffer-reusing form of [`restrict_attention`]. Returns the live mass.
pub fn restrict_into(row: &[f64], live: &[TokenIndex], out: &mut Vec<f64>) -> Result<f64> {
    out.clear();
    let mut mass = 0.0;
    for &i in live {
        let a = *row.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: row.len(),
        })?;
        out.push(a);
        mass += a;
    }
    // Negated so NaN mass also counts as degenerate.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let inv = 1.0 / mass;
    out.iter_mut().for_each(|a| *a *= inv);
    Ok(mass)
}

/// Error of keeping only `live` at one step.
///
/// With `values` (indexed by token) this is `‖Σ w_i v_i − Σ_live w'_i v_i‖₂`
/// where `w'` is the restricted, renormalized row. Without values it is the
/// total-variation distance between `w` and `w'` extended by zeros.
pub fn step_error(full_row: &[f64], live: &[TokenIndex], values: Option<&[&[f64]]>) -> Result<f64> {
    let restricted = restrict_attention(full_row, live)?;
    if live.len() == full_row.len() {
        return Ok(0.0);
    }
    match values {
        Some(values) => {
            let full = attention_output(full_row, values, 0..full_row.len())?;
            value_error(&full, &restricted, live, values)
        }
        None => Ok(weight_tv(full_row, &restricted, live)),
    }
}

fn attention_output(
    row: &[f64],
    values: &[&[f64]],
    tokens: impl Iterator<Item = TokenIndex>,
) -> Result<Vec<f64>> {
    if values.len() < row.len() {
        return Err(Error::Dimension {
            expected: row.len(),
            found: values.len(),
        });
    }
    let dim = values.first().map_or(0, |v| v.len());
    let mut out = alloc::vec![0.0; dim];
    for i in tokens {
        let v = values[i];
        if v.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: v.len(),
            });
        }
        let w = row[i];
        out.iter_mut().zip(v).for_each(|(o, x)| *o += w * x);
    }
    Ok(out)
}

fn value_error(
    full_out: &[f64],
    restricted: &[f64],
    live: &[TokenIndex],
    values: &[&[f64]],
) -> Result<f64> {
    let mut diff = full_out.to_vec();
    for (&i, &w) in live.iter().zip(restricted) {
        let v = values.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: values.len(),
        })?;
        if v.len() != diff.len() {
            return Err(Error::Dimension {
                expected: diff.len(),
                found: v.len(),
            });
        }
        diff.iter_mut().zip(*v).for_each(|(d, x)| *d -= w * x);
    }
    Ok(libm::sqrt(diff.iter().map(|d| d * d).sum()))
}

fn weight_tv(full_row: &[f64], restricted: &[f64], live: &[TokenIndex]) -> f64 {
    let mut l1 = 0.0;
    let mut live_full = 0.0;
    for (&i, &w) in live.iter().zip(restricted) {
        l1 += (full_row[i] - w).abs();
        live_full += full_row[i];
    }
    let total: f64 = full_row.iter().sum();
    l1 += total - live_full;
    0.5 * l1
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Feed policies the oracle attention on their live tokens, without
    /// renormalization, instead of the restricted row. Ablation only.
    pub oracle_visibility: bool,
}

/// Recurrence statistics over the records a policy still holds at the end.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MriStats {
    pub tracked: usize,
    /// Tokens with `mri > 0`.
    pub activated: usize,
    /// Tokens with `mri > 1`.
    pub recurring: usize,
    pub max: usize,
    pub mean: f64,
}

/// Everything recorded while replaying one trace under one policy.
///
/// Per-state vectors have one entry per policy instance: one per head in
/// per-head mode, a single one in mean-pool mode. Error vectors always have
/// one entry per trace head.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunReport {
    pub policy: PolicyKind,
    pub budget_spec: Budget,
    pub budget: usize,
    pub window: usize,
    pub alpha: f64,
    pub head_mode: HeadMode,
    pub error_kind: ErrorKind,
    pub steps: Vec<Step>,
    /// `[state][step]`, live tokens after the step's decision.
    pub live_size: Vec<Vec<usize>>,
    /// `[head][step]`.
    pub errors: Vec<Vec<f64>>,
    /// `[step]`, root-mean-square of `errors` across heads.
    pub error_rms: Vec<f64>,
    /// `[state]`, steps on which the policy evicted.
    pub decisions: Vec<Vec<Step>>,
    pub counters: Vec<Counters>,
    pub final_retained: Vec<Vec<TokenIndex>>,
    /// `[state]`, `(token, step)` pairs in token order.
    pub evicted_at: Vec<Vec<(TokenIndex, Step)>>,
    pub mri: Vec<MriStats>,
    /// Steps where a head's live tokens carried zero attention mass; their
    /// error is recorded at its maximum.
    pub degenerate_steps: usize,
}

impl RunReport {
    pub fn num_states(&self) -> usize {
        self.live_size.len()
    }

    /// Policy instance that serves trace head `head`.
    pub fn state_of_head(&self, head: usize) -> usize {
        match self.head_mode {
            HeadMode::PerHead => head,
            HeadMode::MeanPool => 0,
        }
    }

    pub fn total_counters(&self) -> Counters {
        let mut c = Counters::default();
        for x in &self.counters {
            c += *x;
        }
        c
    }

    pub fn summary(&self) -> RunSummary {
        let n = self.error_rms.len().max(1) as f64;
        let mean_error = self.error_rms.iter().sum::<f64>() / n;
        let max_error = self.error_rms.iter().copied().fold(0.0, f64::max);
        let peak_live = self
            .live_size
            .iter()
            .flat_map(|s| s.iter().copied())
            .max()
            .unwrap_or(0);
        let states = self.num_states().max(1) as f64;
        let mean_live = self
            .live_size
            .iter()
            .map(|s| s.iter().sum::<usize>() as f64 / n)
            .sum::<f64>()
            / states;
        let final_live = self.live_size.iter().filter_map(|s| s.last()).copied().max().unwrap_or(0);
        let counters = self.total_counters();
        RunSummary {
            policy: self.policy,
            budget_spec: self.budget_spec,
            budget: self.budget,
            window: self.window,
            alpha: self.alpha,
            error_kind: self.error_kind,
            mean_error,
            max_error,
            peak_live,
            mean_live,
            final_live,
            decisions: counters.eviction_steps,
            counters,
            degenerate_steps: self.degenerate_steps,
        }
    }
}

/// Aggregate view of a [`RunReport`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunSummary {
    pub policy: PolicyKind,
    pub budget_spec: Budget,
    pub budget: usize,
    pub window: usize,
    pub alpha: f64,
    pub error_kind: ErrorKind,
    pub mean_error: f64,
    pub max_error: f64,
    /// Largest live-set size of any single policy instance.
    pub peak_live: usize,
    pub mean_live: f64,
    pub final_live: usize,
    /// Steps on which any eviction happened, summed over instances.
    pub decisions: u64,
    pub counters: Counters,
    pub degenerate_steps: usize,
}

/// Replays `trace` under `kind` with configuration `cfg`.
pub fn run(trace: &Trace, kind: PolicyKind, cfg: &PolicyConfig, opts: &RunOptions) -> Result<RunReport> {
    let budget = cfg.budget.resolve(trace.final_len())?;
    cfg.validate(kind, budget)?;
    let n_states = match cfg.head_mode {
        HeadMode::PerHead => trace.num_heads(),
        HeadMode::MeanPool => 1,
    };
    let policies = (0..n_states)
        .map(|_| build_policy(kind, cfg, budget, trace.header.prompt_len))
        .collect::<Result<Vec<_>>>()?;
    let mut report = run_policies(trace, policies, cfg.head_mode, opts)?;
    report.policy = kind;
    report.budget_spec = cfg.budget;
    report.budget = budget;
    report.window = cfg.window;
    report.alpha = cfg.alpha;
    Ok(report)
}

/// Replays `trace` through caller-supplied policy instances: one per head in
/// per-head mode, exactly one in mean-pool mode.
///
/// The returned report carries placeholder configuration fields
/// (`budget`, `window`, `alpha`), which [`run`] fills in.
pub fn run_policies<P>(
    trace: &Trace,
    mut policies: Vec<Box<P>>,
    head_mode: HeadMode,
    opts: &RunOptions,
) -> Result<RunReport>
where
    P: Policy + ?Sized,
{
    let n_heads = trace.num_heads();
    let expected_states = match head_mode {
        HeadMode::PerHead => n_heads,
        HeadMode::MeanPool => 1,
    };
    if policies.len() != expected_states {
        return Err(Error::config(alloc::format!(
            "expected {expected_states} policy instances, got {}",
            policies.len()
        )));
    }
    let kind = policies.first().map_or(PolicyKind::Full, |p| p.kind());
    let value_tables: Option<Vec<Vec<&[f64]>>> = if trace.has_values() {
        (0..n_heads).map(|h| trace.value_table(h)).collect()
    } else {
        None
    };
    let error_kind = if value_tables.is_some() {
        ErrorKind::ValueL2
    } else {
        ErrorKind::WeightTv
    };

    let n_steps = trace.steps.len();
    let mut live_size = alloc::vec![Vec::with_capacity(n_steps); expected_states];
    let mut errors = alloc::vec![Vec::with_capacity(n_steps); n_heads];
    let mut error_rms = Vec::with_capacity(n_steps);
    let mut decisions = alloc::vec![Vec::new(); expected_states];
    let mut degenerate_steps = 0;

    let mut idx: Vec<TokenIndex> = Vec::new();
    let mut restricted: Vec<f64> = Vec::new();
    let mut feed: Vec<f64> = Vec::new();

    for step in &trace.steps {
        let t = step.t;
        let mut sq_sum = 0.0;
        for (s, policy) in policies.iter_mut().enumerate() {
            idx.clear();
            idx.extend(policy.state().live_indices());
            idx.push(t);
            let heads = match head_mode {
                HeadMode::PerHead => s..s + 1,
                HeadMode::MeanPool => 0..n_heads,
            };
            let n_pooled = heads.len() as f64;
            feed.clear();
            feed.resize(idx.len(), 0.0);
            for h in heads {
                let full = &step.attn[h];
                let values = value_tables.as_ref().map(|v| v[h].as_slice());
                let err = match restrict_into(full, &idx, &mut restricted) {
                    Ok(_) if idx.len() == full.len() => 0.0,
                    Ok(_) => match values {
                        Some(values) => {
                            let out = attention_output(full, values, 0..full.len())?;
                            value_error(&out, &restricted, &idx, values)?
                        }
                        None => weight_tv(full, &restricted, &idx),
                    },
                    Err(Error::ZeroMass) => {
                        degenerate_steps += 1;
                        restricted.clear();
                        restricted.resize(idx.len(), 0.0);
                        match values {
                            Some(values) => {
                                let out = attention_output(full, values, 0..full.len())?;
                                libm::sqrt(out.iter().map(|x| x * x).sum())
                            }
                            None => 1.0,
                        }
                    }
                    Err(e) => return Err(e),
                };
                errors[h].push(err);
                sq_sum += err * err;
                if opts.oracle_visibility {
                    for (f, &i) in feed.iter_mut().zip(&idx) {
                        *f += full[i] / n_pooled;
                    }
                } else {
                    for (f, &r) in feed.iter_mut().zip(&restricted) {
                        *f += r / n_pooled;
                    }
                }
            }
            if policy.step(&feed, t)?.is_some() {
                decisions[s].push(t);
            }
            live_size[s].push(policy.state().len());
        }
        error_rms.push(libm::sqrt(sq_sum / n_heads as f64));
    }

    let counters = policies.iter().map(|p| p.counters()).collect();
    let final_retained = policies.iter().map(|p| p.state().live_vec()).collect();
    let evicted_at = policies
        .iter()
        .map(|p| p.state().evicted_at().iter().map(|(&i, &s)| (i, s)).collect())
        .collect();
    let mri = policies
        .iter()
        .map(|p| {
            let recs = p.state().records();
            let mut st = MriStats {
                tracked: recs.len(),
                ..Default::default()
            };
            let mut sum = 0usize;
            for r in recs {
                st.activated += (r.mri > 0) as usize;
                st.recurring += (r.mri > 1) as usize;
                st.max = st.max.max(r.mri);
                sum += r.mri;
            }
            st.mean = if recs.is_empty() { 0.0 } else { sum as f64 / recs.len() as f64 };
            st
        })
        .collect();

    Ok(RunReport {
        policy: kind,
        budget_spec: Budget::Absolute(0),
        budget: 0,
        window: 0,
        alpha: 0.0,
        head_mode,
        error_kind,
        steps: trace.steps.iter().map(|s| s.t).collect(),
        live_size,
        errors,
        error_rms,
        decisions,
        counters,
        final_retained,
        evicted_at,
        mri,
        degenerate_steps,
    })
}

/// Configuration grid for [`sweep`]. Every list must be non-empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepGrid {
    pub budgets: Vec<Budget>,
    pub windows: Vec<usize>,
    pub alphas: Vec<f64>,
}

impl SweepGrid {
    /// A one-cell grid holding the values of `cfg`.
    pub fn single(cfg: &PolicyConfig) -> Self {
        SweepGrid {
            budgets: alloc::vec![cfg.budget],
            windows: alloc::vec![cfg.window],
            alphas: alloc::vec![cfg.alpha],
        }
    }
}

/// The cross product of `policies` and `grid`, in policy-major order.
pub fn sweep_cells(
    policies: &[PolicyKind],
    grid: &SweepGrid,
    base: &PolicyConfig,
) -> Result<Vec<(PolicyKind, PolicyConfig)>> {
    let empty: Option<String> = if policies.is_empty() {
        Some("policies".into())
    } else if grid.budgets.is_empty() {
        Some("budgets".into())
    } else if grid.windows.is_empty() {
        Some("windows".into())
    } else if grid.alphas.is_empty() {
        Some("alphas".into())
    } else {
        None
    };
    if let Some(what) = empty {
        return Err(Error::config(alloc::format!("sweep grid has no {what}")));
    }
    let mut cells = Vec::new();
    for &kind in policies {
        for &budget in &grid.budgets {
            for &window in &grid.windows {
                for &alpha in &grid.alphas {
                    cells.push((
                        kind,
                        PolicyConfig {
                            budget,
                            window,
                            alpha,
                            ..base.clone()
                        },
                    ));
                }
            }
        }
    }
    Ok(cells)
}

/// Runs every cell of the grid sequentially and summarizes each run.
pub fn sweep(
    trace: &Trace,
    policies: &[PolicyKind],
    grid: &SweepGrid,
    base: &PolicyConfig,
    opts: &RunOptions,
) -> Result<Vec<RunSummary>> {
    sweep_cells(policies, grid, base)?
        .iter()
        .map(|(kind, cfg)| run(trace, *kind, cfg, opts).map(|r| r.summary()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn restrict_examples() {
        let r = restrict_attention(&[0.25; 4], &[1, 3]).unwrap();
        assert_eq!(r, vec![0.5, 0.5]);
        let r = restrict_attention(&[0.6, 0.3, 0.1], &[0, 2]).unwrap();
        assert!((r[0] - 6.0 / 7.0).abs() < 1e-15);
        assert!((r[1] - 1.0 / 7.0).abs() < 1e-15);
        let row = [0.6, 0.3, 0.1];
        let r = restrict_attention(&row, &[0, 1, 2]).unwrap();
        for (a, b) in r.iter().zip(row) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn restrict_zero_mass() {
        assert_eq!(restrict_attention(&[0.0, 1.0], &[0]), Err(Error::ZeroMass));
        assert!(matches!(
            restrict_attention(&[1.0], &[3]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn step_error_examples() {
        let row = [0.2, 0.5, 0.3];
        assert_eq!(step_error(&row, &[0, 1, 2], None).unwrap(), 0.0);
        assert_eq!(step_error(&[1.0], &[0], None).unwrap(), 0.0);

        let v0 = [1.0, 0.0];
        let v1 = [0.0, 1.0];
        let values: [&[f64]; 2] = [&v0, &v1];
        let e = step_error(&[0.6, 0.4], &[0], Some(&values)).unwrap();
        assert!((e - libm::sqrt(0.32)).abs() < 1e-12);
        assert!((e - 0.5657).abs() < 1e-4);
        let e = step_error(&[0.6, 0.4], &[0, 1], Some(&values)).unwrap();
        assert!(e.abs() < 1e-15);
    }

    #[test]
    fn weight_tv_is_lost_mass() {
        let row = [0.1, 0.2, 0.3, 0.4];
        let e = step_error(&row, &[1, 3], None).unwrap();
        assert!((e - 0.4).abs() < 1e-12);
    }

    #[test]
    fn value_dimension_mismatch() {
        let v0 = [1.0, 0.0];
        let v1 = [0.0];
        let values: [&[f64]; 2] = [&v0, &v1];
        assert!(matches!(
            step_error(&[0.5, 0.5], &[0], Some(&values)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let base = PolicyConfig::default();
        let grid = SweepGrid { budgets: vec![], ..SweepGrid::single(&base) };
        assert!(sweep_cells(&[PolicyKind::Lazy], &grid, &base).is_err());
    }
}
