//! Order-preserving parallel map over independent jobs.

use rayon::prelude::*;

/// Environment variable holding the worker-count hint.
pub const THREADS_ENV: &str = "NNTS_THREADS";

/// Reads `NNTS_THREADS`; unset, empty, zero or unparsable values mean "default".
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
}

/// Evaluates `job(i)` for `i in 0..count` and returns results in index order.
/// The worker count only affects scheduling, never the output.
pub fn map_indexed<T, F>(threads: Option<usize>, count: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if threads == Some(1) || count <= 1 {
        return (0..count).map(job).collect();
    }
    let run = || (0..count).into_par_iter().map(&job).collect::<Vec<T>>();
    match threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(run),
            Err(e) => {
                log::warn!("could not build a {t}-thread pool ({e}); using the global pool");
                run()
            }
        },
        None => run(),
    }
}
