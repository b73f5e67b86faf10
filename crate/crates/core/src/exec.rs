//! Execution policy for the data-parallel loops.
//!
//! Every parallel loop in the crate goes through [`Exec::map`], which returns
//! results in index order. Reductions are then performed sequentially by the
//! caller, so numerical output never depends on the number of workers. When the
//! `parallel` feature is disabled every policy runs on the calling thread.

use std::fmt;
#[cfg(feature = "parallel")]
use std::sync::Arc;

#[derive(Clone, Default)]
pub struct Exec {
    inner: Policy,
}

#[derive(Clone, Default)]
enum Policy {
    Sequential,
    #[default]
    Global,
    #[cfg(feature = "parallel")]
    Pool(Arc<rayon::ThreadPool>),
}

impl fmt::Debug for Exec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.inner {
            Policy::Sequential => write!(f, "Exec::Sequential"),
            Policy::Global => write!(f, "Exec::Global"),
            #[cfg(feature = "parallel")]
            Policy::Pool(p) => write!(f, "Exec::Pool({})", p.current_num_threads()),
        }
    }
}

impl Exec {
    pub fn sequential() -> Self {
        Exec { inner: Policy::Sequential }
    }

    /// Use the global rayon pool (or run sequentially without the `parallel` feature).
    pub fn global() -> Self {
        Exec { inner: Policy::Global }
    }

    /// A dedicated pool with `threads` workers. `threads == 1` is still routed
    /// through rayon so that it exercises the same code path.
    pub fn with_threads(threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            match rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
            {
                Ok(pool) => Exec { inner: Policy::Pool(Arc::new(pool)) },
                Err(_) => Exec::sequential(),
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Exec::sequential()
        }
    }

    pub fn is_parallel(&self) -> bool {
        !matches!(self.inner, Policy::Sequential) && cfg!(feature = "parallel")
    }

    /// `(0..n).map(f)` in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match &self.inner {
            Policy::Sequential => (0..n).map(f).collect(),
            #[cfg(feature = "parallel")]
            Policy::Global => par_map(n, f),
            #[cfg(feature = "parallel")]
            Policy::Pool(pool) => pool.install(|| par_map(n, f)),
            #[cfg(not(feature = "parallel"))]
            Policy::Global => (0..n).map(f).collect(),
        }
    }

    /// Like [`Exec::map`] but with a per-worker scratch value built by `init`.
    pub fn map_init<T, S, I, F>(&self, n: usize, init: I, f: F) -> Vec<T>
    where
        T: Send,
        I: Fn() -> S + Sync + Send,
        F: Fn(&mut S, usize) -> T + Sync + Send,
    {
        match &self.inner {
            Policy::Sequential => {
                let mut scratch = init();
                (0..n).map(|i| f(&mut scratch, i)).collect()
            }
            #[cfg(feature = "parallel")]
            Policy::Global => par_map_init(n, init, f),
            #[cfg(feature = "parallel")]
            Policy::Pool(pool) => pool.install(|| par_map_init(n, init, f)),
            #[cfg(not(feature = "parallel"))]
            Policy::Global => {
                let mut scratch = init();
                (0..n).map(|i| f(&mut scratch, i)).collect()
            }
        }
    }
}

#[cfg(feature = "parallel")]
fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_map_init<T, S, I, F>(n: usize, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map_init(init, f).collect()
}
