//! Command-line front end.
//!
//! Every subcommand accepts `--config FILE`, a JSON object whose keys are
//! long flag names (`"window": 25`, `"policies": ["lazy", "tova"]`,
//! `"oracle_visibility": true`). File values are spliced in ahead of the
//! command-line arguments, so anything given explicitly wins.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kvevict_core::config::TieBreak;
use kvevict_core::metrics::{self, MriHistogram, Prevalence};
use kvevict_core::replay::{sweep_cells, SweepGrid};
use kvevict_core::{
    generate, planted_recall, Budget, HeadMode, PlantSpec, PolicyConfig, PolicyKind, RunOptions,
    RunReport, ScoreParams, ScoreVariant, Trace,
};
use serde::Serialize;

use crate::report::{self, ReportDoc, SummaryRow};
use crate::{parallel, read_trace_file, write_trace_file};

#[derive(Debug, Parser)]
#[command(name = "kvevict", version, about = "Trace-driven KV-cache eviction simulator")]
pub struct Cli {
    /// Worker threads for compare and sweep.
    #[arg(long, global = true, env = "KVEVICT_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trace with planted recurring tokens.
    #[command(args_override_self = true)]
    Gen(GenArgs),
    /// Replay a trace under one policy and write its report.
    #[command(args_override_self = true)]
    Run(RunArgs),
    /// Replay a trace under several policies with the same budget.
    #[command(args_override_self = true)]
    Compare(CompareArgs),
    /// Pick an observation window from the MRI distribution of sample traces.
    #[command(args_override_self = true)]
    Calibrate(CalibrateArgs),
    /// MRI histogram, recurrence prevalence and top-k overlap of a trace.
    #[command(args_override_self = true)]
    Stats(StatsArgs),
    /// Replay a trace over a grid of budgets, windows and thresholds.
    #[command(args_override_self = true)]
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Final sequence length, prompt included.
    #[arg(long, default_value_t = 2000)]
    pub tokens: usize,
    #[arg(long, default_value_t = 64)]
    pub prompt: usize,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    #[arg(long, default_value_t = 32)]
    pub head_dim: usize,
    /// Omit value vectors.
    #[arg(long)]
    pub no_values: bool,
    #[arg(long, default_value_t = 100)]
    pub recurring: usize,
    /// Period range MIN:MAX.
    #[arg(long, default_value = "5:40", value_parser = parse_period)]
    pub period: (usize, usize),
    #[arg(long, default_value_t = 0.5)]
    pub spike_mass: f64,
    #[arg(long, default_value_t = 0.1)]
    pub decay: f64,
    #[arg(long, default_value_t = 0.001)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; a `.gz` suffix compresses.
    #[arg(short, long)]
    pub output: PathBuf,
}

impl GenArgs {
    pub fn spec(&self) -> PlantSpec {
        PlantSpec {
            num_tokens: self.tokens,
            prompt_len: self.prompt,
            num_heads: self.heads,
            head_dim: (!self.no_values).then_some(self.head_dim),
            recurring: self.recurring,
            period_min: self.period.0,
            period_max: self.period.1,
            spike_mass: self.spike_mass,
            decay: self.decay,
            noise: self.noise,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BudgetArgs {
    /// Absolute budget per head.
    #[arg(short = 'B', long, conflicts_with = "ratio")]
    pub budget: Option<usize>,
    /// Budget as a fraction of the final sequence length.
    #[arg(short = 'r', long)]
    pub ratio: Option<f64>,
}

impl BudgetArgs {
    fn budget(&self) -> Budget {
        match (self.budget, self.ratio) {
            (Some(b), _) => Budget::Absolute(b),
            (None, Some(r)) => Budget::Ratio(r),
            (None, None) => PolicyConfig::default().budget,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TieArg {
    Newer,
    Older,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HeadModeArg {
    PerHead,
    MeanPool,
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Score function for both components.
    #[arg(long, default_value = "sigmoid", value_parser = parse_variant)]
    pub score: ScoreVariant,
    /// Override the recency component's function.
    #[arg(long, value_parser = parse_variant)]
    pub h1: Option<ScoreVariant>,
    /// Override the recurrence component's function.
    #[arg(long, value_parser = parse_variant)]
    pub h2: Option<ScoreVariant>,
    /// Score the recurrence component as f(mri - 1) instead of f(1/(mri - 1)).
    #[arg(long)]
    pub h2_inverted: bool,
    #[arg(long, value_enum, default_value_t = HeadModeArg::PerHead)]
    pub head_mode: HeadModeArg,
    #[arg(long, value_enum, default_value_t = TieArg::Newer)]
    pub tie_break: TieArg,
    /// Sink tokens kept by the streaming policy.
    #[arg(long, default_value_t = 4)]
    pub n_sink: usize,
    /// Feed policies unrenormalized oracle attention on their live tokens.
    #[arg(long)]
    pub oracle_visibility: bool,
}

impl PolicyArgs {
    fn config(&self, budget: Budget, window: usize, alpha: f64) -> PolicyConfig {
        PolicyConfig {
            budget,
            window,
            alpha,
            score: ScoreParams {
                h1: self.h1.unwrap_or(self.score),
                h2: self.h2.unwrap_or(self.score),
                h2_inverted: self.h2_inverted,
            },
            head_mode: match self.head_mode {
                HeadModeArg::PerHead => HeadMode::PerHead,
                HeadModeArg::MeanPool => HeadMode::MeanPool,
            },
            tie_break: match self.tie_break {
                TieArg::Newer => TieBreak::NewerWins,
                TieArg::Older => TieBreak::OlderWins,
            },
            n_sink: self.n_sink,
        }
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            oracle_visibility: self.oracle_visibility,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub trace: PathBuf,
    #[arg(short, long, default_value = "lazy", value_parser = parse_policy)]
    pub policy: PolicyKind,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(short = 'W', long, default_value_t = 25)]
    pub window: usize,
    #[arg(long, default_value_t = 0.0005)]
    pub alpha: f64,
    #[command(flatten)]
    pub policy_args: PolicyArgs,
    /// Output prefix; writes PREFIX.report.json, PREFIX.steps.csv and
    /// PREFIX.memory.csv. Defaults to the trace path stem plus the policy.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Head dimension used for memory in bytes; defaults to the trace's.
    #[arg(long)]
    pub head_dim: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub bytes_per_elem: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub trace: PathBuf,
    #[arg(
        short,
        long,
        value_delimiter = ',',
        default_value = "full,streaming,tova,h2o,raas,lazy",
        value_parser = parse_policy
    )]
    pub policies: Vec<PolicyKind>,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[arg(short = 'W', long, default_value_t = 25)]
    pub window: usize,
    #[arg(long, default_value_t = 0.0005)]
    pub alpha: f64,
    #[command(flatten)]
    pub policy_args: PolicyArgs,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    /// Write the table here instead of standard output.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Trace files or glob patterns.
    #[arg(required = true)]
    pub traces: Vec<String>,
    #[arg(long, default_value_t = 0.0005)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.8)]
    pub percentile: f64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub trace: PathBuf,
    #[arg(long, default_value_t = 0.0005)]
    pub alpha: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.8,0.9,1.0")]
    pub percentiles: Vec<f64>,
    /// Fraction of tokens in each top-k set.
    #[arg(long, default_value_t = 0.5)]
    pub topk: f64,
    /// Steps compared pairwise by top-k overlap; defaults to five evenly
    /// spaced steps.
    #[arg(long, value_delimiter = ',')]
    pub overlap_steps: Vec<usize>,
    #[arg(long)]
    pub hist_csv: Option<PathBuf>,
    #[arg(long)]
    pub overlap_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub trace: PathBuf,
    #[arg(short, long, value_delimiter = ',', default_value = "lazy", value_parser = parse_policy)]
    pub policies: Vec<PolicyKind>,
    #[arg(long, value_delimiter = ',', conflicts_with = "budgets")]
    pub ratios: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub budgets: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "25")]
    pub windows: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.0005")]
    pub alphas: Vec<f64>,
    #[command(flatten)]
    pub policy_args: PolicyArgs,
    /// Write the CSV here instead of standard output.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn parse_period(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or("expected MIN:MAX")?;
    let a: usize = a.trim().parse().map_err(|e| format!("bad minimum: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("bad maximum: {e}"))?;
    if a == 0 || a > b {
        return Err(format!("period range {a}:{b} must satisfy 1 <= MIN <= MAX"));
    }
    Ok((a, b))
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    s.trim().parse().map_err(|e: kvevict_core::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<ScoreVariant, String> {
    s.trim().parse().map_err(|e: kvevict_core::Error| e.to_string())
}

const SUBCOMMANDS: [&str; 6] = ["gen", "run", "compare", "calibrate", "stats", "sweep"];

/// Flags of which at most one may be given; an explicit one on the command
/// line suppresses every member of its group coming from a config file.
const EXCLUSIVE: [&[&str]; 2] = [&["budget", "ratio", "B", "r"], &["budgets", "ratios"]];

/// Splices `--config FILE` contents into the argument list.
pub fn expand_config(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let mut out = Vec::with_capacity(args.len());
    let mut config: Option<PathBuf> = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        match a.to_str() {
            Some("--config") => {
                let p = it.next().context("--config needs a file argument")?;
                config = Some(p.into());
            }
            Some(s) if s.starts_with("--config=") => config = Some(s["--config=".len()..].into()),
            _ => out.push(a),
        }
    }
    let Some(path) = config else {
        return Ok(out);
    };
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    let serde_json::Value::Object(map) = value else {
        bail!("config {} must hold a JSON object", path.display());
    };

    let Some(pos) = out
        .iter()
        .position(|a| a.to_str().is_some_and(|s| SUBCOMMANDS.contains(&s)))
    else {
        return Ok(out);
    };
    let given: Vec<String> = out[pos + 1..]
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|s| {
            let s = s.split('=').next().unwrap_or(s);
            s.strip_prefix("--")
                .or_else(|| s.strip_prefix('-'))
                .map(|f| f.replace('_', "-"))
        })
        .collect();
    let suppressed = |key: &str| {
        EXCLUSIVE
            .iter()
            .any(|g| g.contains(&key) && g.iter().any(|f| given.iter().any(|x| x == f)))
    };

    let mut spliced = Vec::new();
    for (key, v) in map {
        let flag = key.replace('_', "-");
        if suppressed(&flag) {
            continue;
        }
        let text = match v {
            serde_json::Value::Bool(true) => {
                spliced.push(OsString::from(format!("--{flag}")));
                continue;
            }
            serde_json::Value::Bool(false) | serde_json::Value::Null => continue,
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Array(items) => items
                .iter()
                .map(|x| match x {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            serde_json::Value::Object(_) => bail!("config key {key:?} has an object value"),
        };
        spliced.push(OsString::from(format!("--{flag}={text}")));
    }
    out.splice(pos + 1..pos + 1, spliced);
    Ok(out)
}

/// Entry point; returns the process exit code.
pub fn main<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let args = match expand_config(args.into_iter().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Compare(a) => cmd_compare(&a, cli.workers),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Stats(a) => cmd_stats(&a),
        Command::Sweep(a) => cmd_sweep(&a, cli.workers),
    }
}

fn load(path: &Path) -> anyhow::Result<Trace> {
    read_trace_file(path).with_context(|| format!("reading trace {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<File> {
    File::create(path).with_context(|| format!("creating {}", path.display()))
}

/// Writes to `path`, or to standard output when `None`.
fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn recall_of(report: &RunReport, trace: &Trace) -> Option<f64> {
    let last = trace.steps.last()?.t;
    planted_recall(report, trace, last).ok()
}

fn cmd_gen(a: &GenArgs) -> anyhow::Result<()> {
    let spec = a.spec();
    let trace = generate(&spec)?;
    write_trace_file(&trace, &a.output)?;
    let p = trace.header.planted.as_ref().expect("generator plants");
    let mut out = io::stdout().lock();
    writeln!(
        out,
        "wrote {}: steps={} heads={} head_dim={} planted={}",
        a.output.display(),
        trace.steps.len(),
        trace.num_heads(),
        spec.head_dim.map_or("none".to_string(), |d| d.to_string()),
        p.len()
    )?;
    if !p.is_empty() {
        let lo = p.periods.iter().min().unwrap();
        let hi = p.periods.iter().max().unwrap();
        let first = p.tokens.first().unwrap();
        let last = p.tokens.last().unwrap();
        writeln!(out, "planted tokens {first}..={last}, periods {lo}..={hi}")?;
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> anyhow::Result<()> {
    let trace = load(&a.trace)?;
    let cfg = a.policy_args.config(a.budget.budget(), a.window, a.alpha);
    let report = kvevict_core::run(&trace, a.policy, &cfg, &a.policy_args.options())?;
    let summary = report.summary();
    let recall = recall_of(&report, &trace);

    let prefix = a.out.clone().unwrap_or_else(|| {
        let stem = a
            .trace
            .file_name()
            .and_then(|s| s.to_str())
            .map(|s| s.trim_end_matches(".gz").trim_end_matches(".jsonl"))
            .unwrap_or("trace");
        a.trace.with_file_name(format!("{stem}.{}", a.policy))
    });
    let with_suffix = |suffix: &str| {
        let mut s = prefix.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    let doc = ReportDoc {
        provenance: &trace.header.provenance,
        summary: summary.clone(),
        planted_recall: recall,
        report: &report,
    };
    report::write_json(&doc, create(&with_suffix(".report.json"))?)?;
    report::write_steps_csv(&report, create(&with_suffix(".steps.csv"))?)?;
    let head_dim = a.head_dim.or(trace.header.head_dim).unwrap_or(128);
    let curve = metrics::memory_curve(&report, head_dim, a.bytes_per_elem);
    report::write_memory_csv(&curve, create(&with_suffix(".memory.csv"))?)?;

    println!("{}", report::summary_line(&summary, recall));
    Ok(())
}

fn cmd_compare(a: &CompareArgs, workers: Option<usize>) -> anyhow::Result<()> {
    if a.policies.is_empty() {
        bail!("no policies given");
    }
    let trace = load(&a.trace)?;
    let cfg = a.policy_args.config(a.budget.budget(), a.window, a.alpha);
    let cells: Vec<_> = a.policies.iter().map(|&k| (k, cfg.clone())).collect();
    let pool = parallel::pool(workers)?;
    let reports = parallel::run_cells(&pool, &trace, &cells, &a.policy_args.options())?;
    let rows: Vec<SummaryRow> = reports
        .iter()
        .map(|r| SummaryRow::new(&r.summary(), recall_of(r, &trace)))
        .collect();
    let out = sink(a.output.as_deref())?;
    match a.format {
        TableFormat::Csv => report::write_rows_csv(&rows, out),
        TableFormat::Json => report::write_json(&rows, out),
    }
}

/// Expands glob patterns; a pattern without matches that names an existing
/// file is taken literally.
fn expand_globs(patterns: &[String]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for pat in patterns {
        let mut matched = false;
        for entry in glob::glob(pat).with_context(|| format!("bad pattern {pat:?}"))? {
            files.push(entry?);
            matched = true;
        }
        if !matched && Path::new(pat).is_file() {
            files.push(PathBuf::from(pat));
        }
    }
    files.sort();
    files.dedup();
    Ok(files)
}

fn cmd_calibrate(a: &CalibrateArgs) -> anyhow::Result<()> {
    let files = expand_globs(&a.traces)?;
    if files.is_empty() {
        bail!("no trace files match {}", a.traces.join(" "));
    }
    let hists = files
        .iter()
        .map(|f| load(f).map(|t| metrics::mri_histogram(&t, a.alpha)))
        .collect::<anyhow::Result<Vec<MriHistogram>>>()?;
    let window = metrics::calibrate_window(&hists, a.percentile)
        .context("no recurring tokens (mri > 1) in the sample")?;
    let mut pooled: Vec<usize> = hists.iter().flat_map(|h| h.recurring()).collect();
    pooled.sort_unstable();
    let total: usize = hists.iter().map(|h| h.mri.iter().map(Vec::len).sum::<usize>()).sum();
    let q = |p| metrics::nearest_rank(&pooled, p).unwrap_or(0);
    println!("window={window}");
    println!(
        "files={} tokens={} recurring={} p50={} p80={} p90={} max={}",
        files.len(),
        total,
        pooled.len(),
        q(0.5),
        q(0.8),
        q(0.9),
        q(1.0)
    );
    Ok(())
}

#[derive(Serialize)]
struct StatsDoc {
    alpha: f64,
    tokens: usize,
    heads: usize,
    prevalence: Prevalence,
    /// Nearest-rank percentiles over all tokens.
    percentiles: Vec<(f64, usize)>,
    /// Nearest-rank percentiles over recurring tokens (`mri > 1`).
    recurring_percentiles: Vec<(f64, usize)>,
    histogram: Vec<(usize, usize)>,
    per_head_histogram: Vec<Vec<(usize, usize)>>,
    overlap: OverlapDoc,
}

#[derive(Serialize)]
struct OverlapDoc {
    k_fraction: f64,
    steps: Vec<usize>,
    matrix: Vec<Vec<f64>>,
}

fn cmd_stats(a: &StatsArgs) -> anyhow::Result<()> {
    let trace = load(&a.trace)?;
    let hist = metrics::mri_histogram(&trace, a.alpha);
    let pooled = hist.pooled();
    let recurring = hist.recurring();
    for &p in &a.percentiles {
        if !(p > 0.0 && p <= 1.0) {
            bail!("percentile {p} must be in (0, 1]");
        }
    }
    let pct = |v: &[usize]| {
        a.percentiles
            .iter()
            .filter_map(|&p| metrics::nearest_rank(v, p).map(|x| (p, x)))
            .collect()
    };
    let steps = if a.overlap_steps.is_empty() {
        default_overlap_steps(&trace)
    } else {
        a.overlap_steps.clone()
    };
    let matrix = metrics::topk_overlap_matrix(&trace, a.topk, &steps)?;
    if let Some(p) = &a.hist_csv {
        report::write_histogram_csv(&hist, create(p)?)?;
    }
    if let Some(p) = &a.overlap_csv {
        report::write_overlap_csv(&steps, &matrix, create(p)?)?;
    }
    let doc = StatsDoc {
        alpha: a.alpha,
        tokens: trace.final_len(),
        heads: trace.num_heads(),
        prevalence: Prevalence::from_histogram(&hist),
        percentiles: pct(&pooled),
        recurring_percentiles: pct(&recurring),
        histogram: hist.counts(None).into_iter().collect(),
        per_head_histogram: (0..hist.num_heads())
            .map(|h| hist.counts(Some(h)).into_iter().collect())
            .collect(),
        overlap: OverlapDoc {
            k_fraction: a.topk,
            steps,
            matrix,
        },
    };
    report::write_json(&doc, io::stdout().lock())
}

fn default_overlap_steps(trace: &Trace) -> Vec<usize> {
    let n = trace.steps.len();
    if n == 0 {
        return Vec::new();
    }
    let mut steps: Vec<usize> = (0..5).map(|i| trace.steps[i * (n - 1) / 4].t).collect();
    steps.dedup();
    steps
}

fn cmd_sweep(a: &SweepArgs, workers: Option<usize>) -> anyhow::Result<()> {
    let trace = load(&a.trace)?;
    let budgets: Vec<Budget> = if !a.budgets.is_empty() {
        a.budgets.iter().map(|&b| Budget::Absolute(b)).collect()
    } else if !a.ratios.is_empty() {
        a.ratios.iter().map(|&r| Budget::Ratio(r)).collect()
    } else {
        vec![PolicyConfig::default().budget]
    };
    let grid = SweepGrid {
        budgets,
        windows: a.windows.clone(),
        alphas: a.alphas.clone(),
    };
    let base = a.policy_args.config(grid.budgets[0], 0, 0.0);
    let cells = sweep_cells(&a.policies, &grid, &base)?;
    let pool = parallel::pool(workers)?;
    let reports = parallel::run_cells(&pool, &trace, &cells, &a.policy_args.options())?;
    let rows: Vec<SummaryRow> = reports
        .iter()
        .map(|r| SummaryRow::new(&r.summary(), recall_of(r, &trace)))
        .collect();
    report::write_rows_csv(&rows, sink(a.output.as_deref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn period_parser() {
        assert_eq!(parse_period("5:40"), Ok((5, 40)));
        assert!(parse_period("50:10").is_err());
        assert!(parse_period("0:3").is_err());
        assert!(parse_period("7").is_err());
    }

    #[test]
    fn config_is_spliced_before_explicit_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"window": 8, "ratio": 0.3, "oracle_visibility": true}"#).unwrap();
        let args = os(&["kvevict", "run", "t.jsonl", "-B", "32", "--config", cfg.to_str().unwrap()]);
        let out = expand_config(args).unwrap();
        let out: Vec<&str> = out.iter().map(|s| s.to_str().unwrap()).collect();
        assert_eq!(out[..2], ["kvevict", "run"]);
        assert!(out.contains(&"--window=8"));
        assert!(out.contains(&"--oracle-visibility"));
        assert!(!out.iter().any(|s| s.starts_with("--ratio")));
        assert_eq!(out[out.len() - 3..], ["t.jsonl", "-B", "32"]);

        let cli = Cli::try_parse_from(
            expand_config(os(&["kvevict", "run", "t.jsonl", "-W", "4", "--config", cfg.to_str().unwrap()]))
                .unwrap(),
        )
        .unwrap();
        let Command::Run(r) = cli.command else { panic!() };
        assert_eq!(r.window, 4);
        assert_eq!(r.budget.ratio, Some(0.3));
        assert!(r.policy_args.oracle_visibility);
    }

    #[test]
    fn budget_flags_are_exclusive() {
        assert!(Cli::try_parse_from(os(&["kvevict", "run", "t", "-B", "3", "-r", "0.5"])).is_err());
    }
}
