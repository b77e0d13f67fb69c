//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper produces results in input order, so reductions over the
//! returned values are independent of the thread count.

#[cfg(feature = "parallel")]
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Default)]
pub struct Parallelism {
    threads: usize,
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Parallelism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Parallelism")
            .field("threads", &self.threads())
            .finish()
    }
}

impl Parallelism {
    pub fn sequential() -> Self {
        Self::default()
    }

    /// `threads == 0` uses every available core. Without the `parallel`
    /// feature this always falls back to sequential execution.
    pub fn new(threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            if threads == 1 {
                return Self::sequential();
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .expect("failed to build thread pool");
            Parallelism {
                threads: pool.current_num_threads(),
                pool: Some(Arc::new(pool)),
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Self::sequential()
        }
    }

    pub fn threads(&self) -> usize {
        self.threads.max(1)
    }

    pub fn is_parallel(&self) -> bool {
        self.threads() > 1
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }

    /// Like [`Parallelism::map`] over `0..n`.
    pub fn map_range<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }

    /// Calls `f(first_index, chunk)` for consecutive `chunk_len`-sized chunks.
    pub fn for_each_chunk_mut<T, F>(&self, data: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        let chunk_len = chunk_len.max(1);
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            pool.install(|| {
                data.par_chunks_mut(chunk_len)
                    .enumerate()
                    .for_each(|(i, c)| f(i * chunk_len, c))
            });
            return;
        }
        for (i, c) in data.chunks_mut(chunk_len).enumerate() {
            f(i * chunk_len, c);
        }
    }

    /// Consumes `items`, calling `f` on each (typically disjoint `&mut` views).
    pub fn for_each_owned<T, F>(&self, items: Vec<T>, f: F)
    where
        T: Send,
        F: Fn(T) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            pool.install(|| items.into_par_iter().for_each(&f));
            return;
        }
        items.into_iter().for_each(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let items: Vec<u64> = (0..1000).collect();
        for p in [Parallelism::sequential(), Parallelism::new(4)] {
            let out = p.map(&items, |x| x * 2);
            assert_eq!(out, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn chunked_writes_cover_everything() {
        let mut data = vec![0usize; 103];
        Parallelism::new(3).for_each_chunk_mut(&mut data, 10, |start, chunk| {
            for (i, v) in chunk.iter_mut().enumerate() {
                *v = start + i;
            }
        });
        assert!(data.iter().enumerate().all(|(i, &v)| i == v));
    }
}
