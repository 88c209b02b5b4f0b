//! Data-parallel execution helpers.
//!
//! Every batch-level loop in the crate (gradient batches, metric
//! evaluation, sweep cells, rollouts) goes through [`map`]. With the
//! `parallel` feature (default) it fans out over the rayon pool; without it
//! the same call is a plain sequential map. Outputs are collected in input
//! order and all floating-point reductions happen sequentially afterwards,
//! so the two paths produce bit-identical results.
//!
//! [`map_seq`] is always sequential; the bench suite uses it as the
//! baseline against [`map`].

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, in parallel when the `parallel` feature is on.
/// Output order matches input order.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Map `f` over `items` sequentially (the `parallel` feature is off).
#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Sequential map, regardless of features. Baseline for benches.
pub fn map_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Map `f` over indices `0..n`, in parallel when enabled.
#[cfg(feature = "parallel")]
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over indices `0..n` sequentially.
#[cfg(not(feature = "parallel"))]
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Sequential range map, regardless of features.
pub fn map_range_seq<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let ys = map(&xs, |x| x * 2);
        let zs = map_seq(&xs, |x| x * 2);
        assert_eq!(ys, zs);
    }

    #[test]
    fn range_map_matches_seq() {
        assert_eq!(map_range(17, |i| i * i), map_range_seq(17, |i| i * i));
    }
}
