//! Ordered fan-out over independent work items.
//!
//! Results always come back in input order, so any reduction the caller does
//! afterwards runs in the same sequence whether or not threads were used.
//! Building without the `parallel` feature removes rayon and runs everything
//! on the calling thread.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::Result;

static SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Force the sequential path at runtime (benchmarks, debugging).
pub fn set_sequential(on: bool) {
    SEQUENTIAL.store(on, Ordering::Relaxed);
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel") && !SEQUENTIAL.load(Ordering::Relaxed)
}

/// `items.map(f)` in order, on the rayon pool when enabled.
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    map_ordered_with(is_parallel(), items, f)
}

/// Like [`map_ordered`] with the mode chosen by the caller. The global
/// sequential switch still wins.
pub fn map_ordered_with<T, R, F>(parallel: bool, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel && is_parallel() && items.len() > 1 {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}
