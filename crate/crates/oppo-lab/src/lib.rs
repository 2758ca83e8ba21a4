//! Experiment harness for `oppo-core`: config parsing, file formats, the
//! seeded episode-loop runner, regret/diagnostic reports, and the lemma
//! property suite.

#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod formats;
pub mod lemmas;
pub mod report;
pub mod runner;

/// Environment variable capping worker threads for (mode, seed) cells.
pub const THREADS_ENV: &str = "OPPO_LAB_THREADS";

/// Worker count: `OPPO_LAB_THREADS` if set, else available parallelism.
pub fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}
