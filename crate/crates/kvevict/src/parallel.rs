//! Runs independent replay cells on a bounded worker pool.

use kvevict_core::{run, PolicyConfig, PolicyKind, RunOptions, RunReport, Trace};
use rayon::prelude::*;

/// Thread pool with `workers` threads, or rayon's default when `None`.
pub fn pool(workers: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        anyhow::ensure!(n > 0, "worker count must be positive");
        b = b.num_threads(n);
    }
    Ok(b.build()?)
}

/// Replays every cell. Results keep the order of `cells`.
pub fn run_cells(
    pool: &rayon::ThreadPool,
    trace: &Trace,
    cells: &[(PolicyKind, PolicyConfig)],
    opts: &RunOptions,
) -> kvevict_core::Result<Vec<RunReport>> {
    pool.install(|| {
        cells
            .par_iter()
            .map(|(kind, cfg)| run(trace, *kind, cfg, opts))
            .collect()
    })
}
