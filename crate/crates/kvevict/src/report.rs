//! JSON and CSV emission for replay reports and statistics.

use std::io::Write;

use kvevict_core::metrics::{MemoryCurve, MriHistogram};
use kvevict_core::{RunReport, RunSummary, Step};
use serde::Serialize;

/// Full JSON document written by `run`.
#[derive(Serialize)]
pub struct ReportDoc<'a> {
    pub provenance: &'a str,
    pub summary: RunSummary,
    pub planted_recall: Option<f64>,
    pub report: &'a RunReport,
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(value: &T, w: W) -> anyhow::Result<()> {
    let mut w = std::io::BufWriter::new(w);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// One row per step per head: `t,head,live_size,error,decision_flag`.
pub fn write_steps_csv<W: Write>(report: &RunReport, w: W) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "head", "live_size", "error", "decision_flag"])?;
    for (head, errors) in report.errors.iter().enumerate() {
        let s = report.state_of_head(head);
        let mut decisions = report.decisions[s].iter().peekable();
        for (k, &t) in report.steps.iter().enumerate() {
            while decisions.next_if(|&&d| d < t).is_some() {}
            let flag = decisions.peek().is_some_and(|&&d| d == t);
            out.write_record([
                t.to_string(),
                head.to_string(),
                report.live_size[s][k].to_string(),
                errors[k].to_string(),
                u8::from(flag).to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Flat summary row shared by `compare` and `sweep`.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub policy: String,
    pub budget_spec: String,
    pub budget: usize,
    pub window: usize,
    pub alpha: f64,
    pub error_kind: &'static str,
    pub mean_error: f64,
    pub max_error: f64,
    pub peak_live: usize,
    pub mean_live: f64,
    pub final_live: usize,
    pub planted_recall: Option<f64>,
    pub decisions: u64,
    pub topk_selections: u64,
    pub eviction_scans: u64,
    pub score_evaluations: u64,
    pub evictions: u64,
    pub degenerate_steps: usize,
}

impl SummaryRow {
    pub fn new(s: &RunSummary, planted_recall: Option<f64>) -> Self {
        SummaryRow {
            policy: s.policy.to_string(),
            budget_spec: s.budget_spec.to_string(),
            budget: s.budget,
            window: s.window,
            alpha: s.alpha,
            error_kind: s.error_kind.label(),
            mean_error: s.mean_error,
            max_error: s.max_error,
            peak_live: s.peak_live,
            mean_live: s.mean_live,
            final_live: s.final_live,
            planted_recall,
            decisions: s.decisions,
            topk_selections: s.counters.topk_selections,
            eviction_scans: s.counters.eviction_scans,
            score_evaluations: s.counters.score_evaluations,
            evictions: s.counters.evictions,
            degenerate_steps: s.degenerate_steps,
        }
    }
}

pub fn write_rows_csv<W: Write, T: Serialize>(rows: &[T], w: W) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// One-line human summary printed by `run`.
pub fn summary_line(s: &RunSummary, recall: Option<f64>) -> String {
    let mut line = format!(
        "policy={} B={} W={} alpha={} {}_mean={:.6} {}_max={:.6} peak_live={} decisions={}",
        s.policy,
        s.budget,
        s.window,
        s.alpha,
        s.error_kind.label(),
        s.mean_error,
        s.error_kind.label(),
        s.max_error,
        s.peak_live,
        s.decisions
    );
    if let Some(r) = recall {
        line.push_str(&format!(" planted_recall={r:.4}"));
    }
    line
}

/// `mri,count` pooled over heads.
pub fn write_histogram_csv<W: Write>(hist: &MriHistogram, w: W) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["mri", "count"])?;
    for (m, c) in hist.counts(None) {
        out.write_record([m.to_string(), c.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Square overlap matrix with a leading `step` column.
pub fn write_overlap_csv<W: Write>(steps: &[Step], matrix: &[Vec<f64>], w: W) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["step".to_string()];
    header.extend(steps.iter().map(|s| s.to_string()));
    out.write_record(&header)?;
    for (s, row) in steps.iter().zip(matrix) {
        let mut rec = vec![s.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// `t,live_tokens,bytes`.
pub fn write_memory_csv<W: Write>(curve: &MemoryCurve, w: W) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "live_tokens", "bytes"])?;
    for ((t, n), b) in curve.steps.iter().zip(&curve.tokens).zip(&curve.bytes) {
        out.write_record([t.to_string(), n.to_string(), b.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
