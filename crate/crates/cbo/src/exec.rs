//! Fan-out of independent work items (MC paths, ensemble seeds).
//!
//! Results come back in index order, so aggregation downstream is
//! deterministic regardless of scheduling. With the `parallel` feature
//! disabled every entry point degrades to the sequential loop.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Runs `task` for indices `0..count`, in parallel when the `parallel`
/// feature is enabled. `jobs` bounds the worker count; `None` uses the
/// global pool, `Some(1)` forces the sequential path.
pub fn run_indexed<T, F>(count: usize, jobs: Option<usize>, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        match jobs {
            Some(0) | Some(1) => run_indexed_sequential(count, task),
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("worker pool")
                .install(|| (0..count).into_par_iter().map(task).collect()),
            None => (0..count).into_par_iter().map(task).collect(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        run_indexed_sequential(count, task)
    }
}

/// The plain sequential loop, kept public so benchmarks can compare against
/// the parallel path directly.
pub fn run_indexed_sequential<T, F>(count: usize, task: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(task).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let task = |i: usize| (i as f64).sqrt() * 3.0 - i as f64;
        let seq = run_indexed_sequential(500, task);
        for jobs in [None, Some(1), Some(4)] {
            let par = run_indexed(500, jobs, task);
            assert_eq!(par, seq);
        }
    }
}
