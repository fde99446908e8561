//! Execution-mode plumbing for the data-parallel loops.
//!
//! Seed sweeps and Monte-Carlo suites are embarrassingly parallel: every
//! work item owns its derived random stream and items are collected back in
//! index order, so the parallel and sequential paths produce identical
//! bytes. The `parallel` feature gates the rayon dependency; without it
//! `ExecMode::Parallel` silently degrades to the sequential loop.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How to execute an indexed batch of independent work items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

/// Maps `f` over `0..n`, in parallel when requested and compiled in.
/// Output order is always index order.
pub fn indexed_map<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_preserve_order() {
        let f = |i: usize| i * i + 1;
        let seq = indexed_map(ExecMode::Sequential, 100, f);
        let par = indexed_map(ExecMode::Parallel, 100, f);
        assert_eq!(seq, par);
        assert_eq!(seq[3], 10);
    }
}
