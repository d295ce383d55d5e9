//! Grid and seed sweeps.
//!
//! With the `parallel` feature (default) cells run on the rayon pool; without
//! it they run in order on the calling thread. Output order always matches
//! input order, so results are identical either way.

/// Maps `f` over `cells`, in parallel when the `parallel` feature is enabled.
pub fn map_cells<T, R, F>(cells: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_cells_parallel(cells, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_cells_sequential(cells, f)
    }
}

pub fn map_cells_sequential<T, R, F>(cells: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    cells.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_cells_parallel<T, R, F>(cells: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    cells.par_iter().map(f).collect()
}

/// Number of worker threads `map_cells` will use.
pub fn worker_count() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Inclusive grid of `n` points, linear or logarithmic.
pub fn grid(min: f64, max: f64, n: usize, log: bool) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                if log {
                    (min.ln() + t * (max.ln() - min.ln())).exp()
                } else {
                    min + t * (max - min)
                }
            })
            .collect(),
    }
}
