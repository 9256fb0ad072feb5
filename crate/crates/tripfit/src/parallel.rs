//! Data-parallel helpers with a sequential fallback.
//!
//! Per-observation work (sampling, likelihoods, gradient terms) is mapped
//! over a slice and collected in input order, so reductions fold results in
//! a fixed sequence and every run is bitwise reproducible no matter how the
//! scheduler interleaves chunks. Built without the `parallel` feature the
//! same entry points run on one thread.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Whether this build executes mapped work on a thread pool.
pub const PARALLEL: bool = cfg!(feature = "parallel");

/// Caps the size of the global thread pool. Call before first use; later
/// calls are ignored (the pool is built once per process).
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}

/// Maps `f` over `items` with the item index, returning results in input
/// order. The index lets callers derive per-item RNG streams so parallel
/// and sequential builds draw identical randomness.
pub fn indexed_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_input_order() {
        let items: Vec<usize> = (0..1000).collect();
        let out = indexed_map(&items, |i, &x| i * 2 + x);
        for (i, &v) in out.iter().enumerate() {
            assert_eq!(v, 3 * i);
        }
    }
}
