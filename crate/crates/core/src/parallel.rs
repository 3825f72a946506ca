//! Worker pool sized by `ROBUSTPATH_THREADS`.

use std::sync::OnceLock;

use rayon::prelude::*;

/// Environment variable that caps the number of worker threads.
pub const THREADS_ENV: &str = "ROBUSTPATH_THREADS";

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&t| t > 0);
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(t) = threads {
            builder = builder.num_threads(t);
        }
        builder.build().expect("thread pool construction")
    })
}

/// Order-preserving parallel map; results do not depend on the thread count.
pub(crate) fn map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    pool().install(|| items.par_iter().map(f).collect())
}
