//! Data-parallel execution helpers.
//!
//! Every hot loop in the crate (exhaustive offloading enumeration, the
//! frame-grid search, ADMM local updates, sweep replications) goes through
//! [`Exec`]. With the `parallel` feature the work is spread over the rayon
//! pool; without it, or with [`Exec::Sequential`], the same closure runs on
//! the calling thread. Results are always returned in input order, so both
//! paths produce identical output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// True when work will actually be dispatched to the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Order-preserving map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map over `0..n`.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Minimum of `f(i)` over `0..n` by `(key, i)`, so ties go to the lowest
    /// index regardless of how the range was partitioned.
    pub fn argmin_range<F>(self, n: u64, f: F) -> Option<(u64, f64)>
    where
        F: Fn(u64) -> f64 + Sync + Send,
    {
        let better = |a: (u64, f64), b: (u64, f64)| -> (u64, f64) {
            match a.1.total_cmp(&b.1) {
                std::cmp::Ordering::Less => a,
                std::cmp::Ordering::Greater => b,
                std::cmp::Ordering::Equal => {
                    if a.0 <= b.0 {
                        a
                    } else {
                        b
                    }
                }
            }
        };
        if n == 0 {
            return None;
        }
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(|i| (i, f(i))).reduce_with(better);
        }
        (0..n).map(|i| (i, f(i))).reduce(better)
    }
}
