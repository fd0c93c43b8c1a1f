//! Sequential / data-parallel execution switch.
//!
//! Element loops in assembly, estimation and upscaling go through
//! [`Execution::map`]. With the `parallel` feature the parallel path uses
//! rayon; without it every request silently runs sequentially. Both paths
//! return results in index order, so output never depends on scheduling.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// `(0..n).map(f).collect()`, possibly in parallel.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Applies `f` to each element of `out` with its index.
    pub fn for_each_mut<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize, &mut T) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            out.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
            return;
        }
        out.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_paths_agree_and_keep_order() {
        let a = Execution::Sequential.map(1000, |i| (i * i) as f64);
        let b = Execution::Parallel.map(1000, |i| (i * i) as f64);
        assert_eq!(a, b);
        let mut v = vec![0usize; 64];
        Execution::Parallel.for_each_mut(&mut v, |i, x| *x = 2 * i);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }
}
