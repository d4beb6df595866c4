//! Execution mode for the data-parallel inner loops.
//!
//! With the `parallel` feature (on by default) [`Parallelism::Parallel`] runs
//! on the rayon global pool; without it every mode runs sequentially. Output
//! order never depends on the mode.

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

impl Parallelism {
    /// Whether work will actually be spread across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Parallel
    }

    /// `items.iter().map(f).collect()`, order preserved.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Parallelism::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Map over `0..n`, order preserved.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Parallelism::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Count of items satisfying `pred`.
    pub fn count<T, F>(self, items: &[T], pred: F) -> usize
    where
        T: Sync,
        F: Fn(&T) -> bool + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Parallelism::Parallel {
            use rayon::prelude::*;
            return items.par_iter().filter(|x| pred(x)).count();
        }
        items.iter().filter(|x| pred(x)).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = Parallelism::Sequential.map(&xs, |x| x * x);
        let b = Parallelism::Parallel.map(&xs, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(
            Parallelism::Sequential.count(&xs, |x| x % 3 == 0),
            Parallelism::Parallel.count(&xs, |x| x % 3 == 0)
        );
        assert_eq!(Parallelism::Parallel.map_range(5, |i| i), vec![0, 1, 2, 3, 4]);
    }
}
