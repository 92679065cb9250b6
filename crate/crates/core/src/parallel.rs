//! Data-parallel map/reduce over fixed-size chunks.
//!
//! Items are split into chunks of a fixed size and each chunk is folded sequentially, so the
//! floating-point association order depends only on the chunk size. Results are therefore
//! identical with the rayon backend, any thread count, or the sequential fallback.

/// Default items per chunk for gradient accumulation.
pub const DEFAULT_CHUNK: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Backend {
    #[cfg_attr(feature = "parallel", default)]
    Rayon,
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
}

impl Backend {
    /// The rayon backend when compiled in, otherwise sequential.
    pub fn available() -> Self {
        if cfg!(feature = "parallel") {
            Backend::Rayon
        } else {
            Backend::Sequential
        }
    }
}

/// Run `f` on every chunk (with the index of its first item) and return results in order.
pub fn map_chunks<T, A, F>(backend: Backend, items: &[T], chunk: usize, f: F) -> Vec<A>
where
    T: Sync,
    A: Send,
    F: Fn(usize, &[T]) -> A + Sync + Send,
{
    let chunk = chunk.max(1);
    match backend {
        #[cfg(feature = "parallel")]
        Backend::Rayon => {
            use rayon::prelude::*;
            items
                .par_chunks(chunk)
                .enumerate()
                .map(|(i, c)| f(i * chunk, c))
                .collect()
        }
        _ => items
            .chunks(chunk)
            .enumerate()
            .map(|(i, c)| f(i * chunk, c))
            .collect(),
    }
}

/// Map every item, keeping order.
pub fn map_items<T, A, F>(backend: Backend, items: &[T], f: F) -> Vec<A>
where
    T: Sync,
    A: Send,
    F: Fn(usize, &T) -> A + Sync + Send,
{
    map_chunks(backend, items, 1, |i, c| f(i, &c[0]))
}

/// Run `f` on a dedicated pool with `threads` workers; `None` uses the global pool.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_results_are_ordered() {
        let items: Vec<u32> = (0..23).collect();
        for backend in [Backend::available(), Backend::Sequential] {
            let sums = map_chunks(backend, &items, 5, |start, c| (start, c.iter().sum::<u32>()));
            assert_eq!(sums.len(), 5);
            assert_eq!(sums[1], (5, 5 + 6 + 7 + 8 + 9));
            assert_eq!(sums[4], (20, 20 + 21 + 22));
        }
    }

    #[test]
    fn float_reduction_matches_sequential_bitwise() {
        let items: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() * 1e-3).collect();
        let fold = |backend| {
            map_chunks(backend, &items, DEFAULT_CHUNK, |_, c| c.iter().sum::<f64>())
                .into_iter()
                .sum::<f64>()
        };
        let a = with_threads(Some(3), || fold(Backend::available()));
        let b = fold(Backend::Sequential);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
