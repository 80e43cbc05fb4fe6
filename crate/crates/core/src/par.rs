//! Order-preserving map over an index range: data-parallel with the
//! `parallel` feature, sequential otherwise. Results are always returned in
//! index order, so callers see identical output either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Whether this build runs work in parallel.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Runs `f` with parallelism capped at `threads` workers (0 = library
/// default). Results are identical for any cap.
#[cfg(feature = "parallel")]
pub fn with_threads<T, F>(threads: usize, f: F) -> crate::Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| crate::Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<T, F>(_threads: usize, f: F) -> crate::Result<T>
where
    F: FnOnce() -> T,
{
    Ok(f())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_preserved_under_any_cap() {
        let a = with_threads(1, || map_indexed(100, |i| i * i)).unwrap();
        let b = with_threads(4, || map_indexed(100, |i| i * i)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }
}
