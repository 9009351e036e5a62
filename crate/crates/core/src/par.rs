//! Data-parallel loop helpers.
//!
//! With the `parallel` feature these dispatch to rayon; without it they are
//! plain sequential loops. Work is always split into fixed-size pieces, so
//! results do not depend on the number of worker threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Calls `f(index, chunk)` for each `chunk_len`-sized piece of `data`.
pub fn chunks_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    let chunk_len = chunk_len.max(1);
    #[cfg(feature = "parallel")]
    {
        if data.len() > chunk_len {
            data.par_chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
            return;
        }
    }
    data.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
}

/// Ordered `(0..n).map(f).collect()`.
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Runs `f` with internal parallelism capped at `threads` workers.
///
/// `threads == 1` (or a build without the `parallel` feature) runs
/// everything on the calling thread.
pub fn with_threads<R: Send, F: FnOnce() -> R + Send>(threads: usize, f: F) -> R {
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}

/// Caps the global worker count. Only the first call has an effect.
pub fn init_global_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
    }
}

/// Worker count available to operations started from this thread.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
