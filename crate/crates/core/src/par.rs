//! Point-parallel loops; sequential unless the `parallel` feature is enabled.

/// Calls `f(point, chunk)` for each `comps`-sized chunk of `out`.
pub fn for_each_point<F>(out: &mut [f64], comps: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if comps == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(comps)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(comps).enumerate().for_each(|(i, c)| f(i, c));
    }
}

/// Sum of `f(point)` over `0..n`, accumulated in point order so results are
/// bit-identical with and without threads.
pub fn sum_points<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_collect(n, f).iter().sum()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).sum()
    }
}

/// Maps `f` over `0..n` into a vector.
pub fn map_collect<T, F>(n: usize, f: F) -> alloc::vec::Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
