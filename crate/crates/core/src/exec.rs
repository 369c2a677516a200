//! Data-parallel helpers with a sequential fallback.
//!
//! Every reduction here runs over fixed-size chunks whose partial results are
//! folded left to right, so the floating-point result does not depend on the
//! number of worker threads or on whether the `parallel` feature is enabled.

/// Elements per work unit in chunked reductions. Changing it changes the
/// summation order and therefore the low bits of reduced results.
pub const CHUNK: usize = 64;

/// How data-parallel loops are executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    /// Use rayon when the `parallel` feature is compiled in.
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    /// Whether this mode actually fans out to a thread pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Order-preserving map.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map over an index range.
    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Map each `CHUNK`-sized slice to a partial result, then fold the
    /// partials in chunk order.
    pub fn chunked_reduce<T, A, M, R>(self, items: &[T], init: A, map: M, merge: R) -> A
    where
        T: Sync,
        A: Send,
        M: Fn(&[T]) -> A + Sync + Send,
        R: Fn(A, A) -> A,
    {
        let partials: Vec<A> = {
            #[cfg(feature = "parallel")]
            {
                if self.is_parallel() {
                    use rayon::prelude::*;
                    items.par_chunks(CHUNK).map(&map).collect()
                } else {
                    items.chunks(CHUNK).map(&map).collect()
                }
            }
            #[cfg(not(feature = "parallel"))]
            {
                items.chunks(CHUNK).map(&map).collect()
            }
        };
        partials.into_iter().fold(init, merge)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_bitwise() {
        let xs: Vec<f64> = (0..1000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let sum = |e: Exec| {
            e.chunked_reduce(&xs, 0.0, |c| c.iter().sum::<f64>(), |a, b| a + b)
        };
        assert_eq!(
            sum(Exec::Parallel).to_bits(),
            sum(Exec::Sequential).to_bits()
        );
        assert_eq!(
            Exec::Parallel.map(&xs, |x| x * 2.0),
            Exec::Sequential.map(&xs, |x| x * 2.0)
        );
    }

    #[test]
    fn empty_input() {
        let xs: Vec<f64> = vec![];
        let s = Exec::Parallel.chunked_reduce(&xs, 7.0, |c| c.iter().sum::<f64>(), |a, b| a + b);
        assert_eq!(s, 7.0);
    }
}
