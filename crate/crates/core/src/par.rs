//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the helpers dispatch to rayon.
//! Without it, or inside [`sequential`], they run on the calling thread.
//! Every helper returns results in index order, so callers that combine
//! per-block results sequentially get bitwise identical output on both paths.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Runs `f` with all helpers on this thread forced onto the sequential path.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

/// True when the helpers will fan out to worker threads.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(|c| c.get())
}

/// `(0..len).map(f).collect()`, possibly in parallel.
pub fn map_indices<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    (0..len).map(f).collect()
}

/// Splits `0..total` into fixed-size blocks and maps each `(start, end)` range.
pub fn map_blocks<T, F>(total: usize, block: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, usize) -> T + Sync + Send,
{
    let block = block.max(1);
    let n_blocks = total.div_ceil(block);
    map_indices(n_blocks, |b| {
        let start = b * block;
        f(start, (start + block).min(total))
    })
}

/// Block size for reductions over the product space. Fixed so that the
/// reduction tree does not depend on the worker count.
pub const BLOCK: usize = 4096;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_cover_range_in_order() {
        let blocks = map_blocks(10, 3, |s, e| (s, e));
        assert_eq!(blocks, vec![(0, 3), (3, 6), (6, 9), (9, 10)]);
        assert!(map_blocks(0, 3, |s, e| (s, e)).is_empty());
    }

    #[test]
    fn sequential_scope_restores_flag() {
        let outer = is_parallel();
        sequential(|| assert!(!is_parallel()));
        assert_eq!(is_parallel(), outer);
    }

    #[test]
    fn both_paths_agree() {
        let f = |i: usize| (i as f64).sqrt();
        assert_eq!(map_indices(1000, f), sequential(|| map_indices(1000, f)));
    }
}
