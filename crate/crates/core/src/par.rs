//! Order-preserving parallel map over independent jobs.
//!
//! With the `parallel` feature the jobs run on a rayon pool; without it (or
//! with `workers == 1`) they run sequentially. Results always come back in
//! input order, so callers stay deterministic regardless of scheduling.

/// Worker count semantics: `0` means "all available", `1` forces the
/// sequential path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Workers(pub usize);

impl Default for Workers {
    fn default() -> Self {
        Workers(0)
    }
}

impl Workers {
    pub fn sequential() -> Self {
        Workers(1)
    }

    pub fn is_sequential(self) -> bool {
        self.0 == 1 || !cfg!(feature = "parallel")
    }
}

pub fn map<T, R, F>(items: Vec<T>, workers: Workers, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    if workers.is_sequential() || items.len() < 2 {
        return items.into_iter().map(f).collect();
    }
    parallel_map(items, workers, f)
}

/// Runs two closures, concurrently when allowed.
pub fn join<A, B, RA, RB>(workers: Workers, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    if workers.is_sequential() {
        return (a(), b());
    }
    parallel_join(a, b)
}

#[cfg(feature = "parallel")]
fn parallel_map<T, R, F>(items: Vec<T>, workers: Workers, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    use rayon::prelude::*;

    if workers.0 == 0 {
        return items.into_par_iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers.0).build() {
        Ok(pool) => pool.install(|| items.into_par_iter().map(f).collect()),
        Err(_) => items.into_iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R, F>(items: Vec<T>, _workers: Workers, f: F) -> Vec<R>
where
    F: Fn(T) -> R,
{
    items.into_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
fn parallel_join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
fn parallel_join<A, B, RA, RB>(a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA,
    B: FnOnce() -> RB,
{
    (a(), b())
}
