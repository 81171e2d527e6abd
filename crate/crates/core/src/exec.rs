//! Data-parallel execution switch.
//!
//! Inner loops (per-sample convolutions, Monte-Carlo cost sampling, grid
//! evaluation, synthetic rendering) go through [`map_indexed`]. With the
//! `parallel` feature they run on the rayon pool unless the process-wide mode
//! is set to [`ExecMode::Sequential`]; without it they always run in order.
//! Results are collected in index order and every reduction downstream is done
//! sequentially, so both modes produce bit-identical outputs.

use std::sync::atomic::{AtomicU8, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(1);

pub fn set_exec_mode(mode: ExecMode) {
    MODE.store(matches!(mode, ExecMode::Parallel) as u8, Ordering::Relaxed);
}

pub fn exec_mode() -> ExecMode {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == 1 {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    map_indexed_with(n, || (), |_, i| f(i))
}

/// Like [`map_indexed`], with a scratch value built by `init` once per worker.
pub fn map_indexed_with<S, R, I, F>(n: usize, init: I, f: F) -> Vec<R>
where
    R: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n > 1 && exec_mode() == ExecMode::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map_init(&init, |s, i| f(s, i)).collect();
        }
    }
    let mut s = init();
    (0..n).map(|i| f(&mut s, i)).collect()
}

/// Calls `f(i, chunk)` for each consecutive `chunk`-sized piece of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    for_each_chunk_mut_with(data, chunk, || (), |_, i, c| f(i, c));
}

/// Like [`for_each_chunk_mut`], with a scratch value built by `init` once per worker.
pub fn for_each_chunk_mut_with<T, S, I, F>(data: &mut [T], chunk: usize, init: I, f: F)
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if data.len() > chunk && exec_mode() == ExecMode::Parallel {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each_init(&init, |s, (i, c)| f(s, i, c));
            return;
        }
    }
    let mut s = init();
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(&mut s, i, c));
}
