//! Data-parallel helpers.
//!
//! With the `parallel` feature these dispatch onto rayon; without it every
//! helper runs the same closure sequentially. Work is always split so that
//! each output element is produced by exactly one closure invocation with a
//! fixed internal summation order, which keeps results bit-identical
//! regardless of thread count.

/// Minimum multiply-accumulate count before a kernel is split across threads.
pub const MIN_PARALLEL_WORK: usize = 1 << 15;

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Calls `f(row_index, row)` for every `row_len`-sized chunk of `out`.
/// Runs in parallel only when `work` reaches [`MIN_PARALLEL_WORK`].
pub fn for_each_row<F>(out: &mut [f64], row_len: usize, work: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        if work >= MIN_PARALLEL_WORK && rayon::current_num_threads() > 1 {
            use rayon::prelude::*;
            out.par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
            return;
        }
    }
    let _ = work;
    out.chunks_mut(row_len).enumerate().for_each(|(i, row)| f(i, row));
}

/// Runs `f` with at most `workers` threads. `workers == 0` means "use the
/// ambient pool". Without the `parallel` feature this just calls `f`.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if workers > 0 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                return pool.install(f);
            }
        }
    }
    let _ = workers;
    f()
}

/// Number of threads the helpers above will use.
pub fn current_workers() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// SplitMix64 finalizer; used to derive independent per-sample seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` of a stream rooted at `root`.
pub fn derive_seed(root: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}
