//! Shot-ensemble execution.
//!
//! With the default `parallel` feature the ensembles fan out over rayon;
//! without it the same entry points run sequentially. Results are keyed by
//! shot index and histograms merge by integer addition, so the aggregate is
//! bit-identical regardless of thread count or work stealing order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over shot indices `0..shots`, collecting in index order.
pub fn run_shots<T, F>(shots: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..shots).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..shots).map(f).collect()
    }
}

/// Sequential twin of [`run_shots`], compiled unconditionally. Used as the
/// benchmark baseline and wherever a caller wants to stay on one core.
pub fn run_shots_serial<T, F>(shots: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..shots).map(f).collect()
}

/// Histogram of `f` over shot indices: slot `n` counts shots that returned
/// `n`. Merging is commutative, so the parallel and serial paths agree
/// exactly.
pub fn tally_shots<F>(shots: u64, f: F) -> Vec<u64>
where
    F: Fn(u64) -> u32 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..shots)
            .into_par_iter()
            .fold(Vec::new, |mut hist, index| {
                bump(&mut hist, f(index));
                hist
            })
            .reduce(Vec::new, merge)
    }
    #[cfg(not(feature = "parallel"))]
    {
        tally_shots_serial(shots, f)
    }
}

pub fn tally_shots_serial<F>(shots: u64, f: F) -> Vec<u64>
where
    F: Fn(u64) -> u32 + Sync + Send,
{
    let mut hist = Vec::new();
    for index in 0..shots {
        bump(&mut hist, f(index));
    }
    hist
}

fn bump(hist: &mut Vec<u64>, n: u32) {
    let slot = n as usize;
    if hist.len() <= slot {
        hist.resize(slot + 1, 0);
    }
    hist[slot] += 1;
}

fn merge(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    if a.len() < b.len() {
        a.resize(b.len(), 0);
    }
    for (slot, add) in b.into_iter().enumerate() {
        a[slot] += add;
    }
    a
}
