//! Utility, effectiveness and efficiency metrics, and the report comparing
//! an unlearned model with its retrained reference.

mod metrics;
mod report;

pub use metrics::{
    deployable, mean_target_rank, ranking_metrics, rel_eff, rel_eff_from, rel_items, sensitive_at_k, speedup, utility,
    RankingMetrics, UtilityAtK, DEPLOYABLE_REL_EFF, DEPLOYABLE_SPEEDUP,
};
pub use report::{build_report, KMetrics, MetricsReport, ReportInput, SensitiveTarget, Timing, UnlearnedRun, DEFAULT_KS};

/// Environment variable bounding evaluation threads.
pub const THREADS_ENV: &str = "ERASEBENCH_THREADS";

/// Runs `f` on a thread pool sized by `ERASEBENCH_THREADS`, or on the global
/// pool when the variable is unset or invalid.
pub fn with_eval_threads<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let n = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|n| *n > 0);
    match n.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}
