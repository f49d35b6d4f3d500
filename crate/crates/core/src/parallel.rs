//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) the mapping helpers run on the rayon
//! pool; without it every call is sequential. Results are always collected in
//! input order and reductions are performed by the caller in that order, so
//! both paths produce bit-identical output.

/// Execution strategy for batch-level work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    Parallel,
}

impl Default for Parallelism {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Parallelism::Parallel
        } else {
            Parallelism::Sequential
        }
    }
}

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, mode: Parallelism, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    match mode {
        #[cfg(feature = "parallel")]
        Parallelism::Parallel if n > 1 => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Map `f` over a slice, collecting results in input order.
pub fn map_slice<I, T, F>(items: &[I], mode: Parallelism, f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Send + Sync,
{
    map_indexed(items.len(), mode, |i| f(&items[i]))
}
