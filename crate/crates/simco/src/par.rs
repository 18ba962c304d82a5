//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the helpers fan work out over the
//! rayon global pool; without it they run plain sequential loops. Results are
//! collected in index order either way, so outputs are identical across both
//! builds and any thread count.

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn par_map_index<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn par_map_index<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Cap the rayon pool from the `SIMCO_THREADS` environment variable.
///
/// No-op when the variable is unset, unparsable, or the pool is already
/// initialized; always a no-op in sequential builds.
pub fn configure_threads_from_env() {
    #[cfg(feature = "parallel")]
    {
        if let Ok(v) = std::env::var("SIMCO_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n > 0 {
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
            }
        }
    }
}
