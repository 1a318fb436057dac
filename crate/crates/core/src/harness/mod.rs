//! Bound checks, verification campaigns, the surprise locator and the
//! scaling experiments.

pub mod bounds;
pub mod campaign;
pub mod experiments;
pub mod locator;
pub mod report;

pub use bounds::{bound_value, BoundCtx, BoundKind};
pub use campaign::{verify_family, CampaignSpec, Corpus, XyPolicy};
pub use experiments::{experiment_cycle_pstar, experiment_gm_peak, experiment_gm_scaling, Assertion, ExperimentReport};
pub use locator::{surprise_lower_locator, LocatorOptions, LocatorResult};
pub use report::{ReportRow, VerificationReport};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "HITSTAT_THREADS";

/// Worker count from `HITSTAT_THREADS`, or the machine's parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` on a rayon pool sized by [`thread_count`].
pub fn with_pool<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    with_threads(thread_count(), f)
}

pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
