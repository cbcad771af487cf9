//! Data-parallel helpers. With the `parallel` feature these dispatch to
//! rayon; without it every strategy runs sequentially.
//!
//! Reductions that feed trained weights go through [`chunked_sum`], which
//! fixes the summation order so results are bit-identical across thread
//! counts.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How a batch operation is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Sequential,
    Parallel,
}

impl Default for Strategy {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Strategy::Parallel
        } else {
            Strategy::Sequential
        }
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(strategy: Strategy, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match strategy {
        #[cfg(feature = "parallel")]
        Strategy::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(strategy: Strategy, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match strategy {
        #[cfg(feature = "parallel")]
        Strategy::Parallel => (0..n).into_par_iter().map(f).collect(),
        _ => (0..n).map(f).collect(),
    }
}

/// Number of partitions used by [`chunked_sum`]. Fixed so summation order
/// never depends on the thread pool, and small so memory stays at
/// `SUM_PARTS * dim` floats.
pub const SUM_PARTS: usize = 16;

/// Sums `f(item)` vectors of length `dim` over `items`. The items are cut
/// into at most [`SUM_PARTS`] contiguous chunks; each chunk is accumulated
/// sequentially, then chunk totals are added in chunk order.
pub fn chunked_sum<T, F>(strategy: Strategy, items: &[T], dim: usize, f: F) -> Vec<f64>
where
    T: Sync,
    F: Fn(&T, &mut [f64]) + Sync + Send,
{
    let size = items.len().div_ceil(SUM_PARTS).max(1);
    let chunks: Vec<&[T]> = items.chunks(size).collect();
    let partials = map(strategy, &chunks, |chunk| {
        let mut acc = vec![0.0; dim];
        for item in chunk.iter() {
            f(item, &mut acc);
        }
        acc
    });
    let mut total = vec![0.0; dim];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree_bitwise() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin() * 1e-3 + 1.0 / (i + 1) as f64).collect();
        let add = |x: &f64, acc: &mut [f64]| {
            acc[0] += *x;
            acc[1] += x * x;
        };
        let a = chunked_sum(Strategy::Sequential, &xs, 2, add);
        let b = chunked_sum(Strategy::Parallel, &xs, 2, add);
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
        assert_eq!(map(Strategy::Parallel, &xs, |x| x * 2.0), map(Strategy::Sequential, &xs, |x| x * 2.0));
    }
}
