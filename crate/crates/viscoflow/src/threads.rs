//! Assembly thread pool, capped by the `VISCOFLOW_THREADS` environment
//! variable. `VISCOFLOW_THREADS=1` (or building without the `parallel`
//! feature) selects the sequential path.

#[cfg(feature = "parallel")]
use std::sync::OnceLock;

#[cfg(feature = "parallel")]
static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();

/// The shared assembly pool, or `None` when parallelism is capped to one
/// thread.
#[cfg(feature = "parallel")]
pub(crate) fn pool() -> Option<&'static rayon::ThreadPool> {
    POOL.get_or_init(|| {
        let threads = std::env::var("VISCOFLOW_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok());
        match threads {
            Some(1) => None,
            Some(n) if n > 1 => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .expect("thread pool construction"),
            ),
            _ => Some(
                rayon::ThreadPoolBuilder::new()
                    .build()
                    .expect("thread pool construction"),
            ),
        }
    })
    .as_ref()
}
