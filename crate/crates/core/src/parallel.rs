//! Seeded random streams and the worker pool.
//!
//! Every random draw in training comes from a stream identified by
//! `(master seed, purpose, a, b)`, so results do not depend on the order in
//! which workers happen to run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "MINICONVNET_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamKind {
    Init = 1,
    Split = 2,
    Shuffle = 3,
    Augment = 4,
    Dropout = 5,
    Synthetic = 6,
    Preview = 7,
}

/// Independent ChaCha stream for one purpose. `a` is usually an epoch or a
/// class index (low 24 bits used), `b` a sample index.
pub fn stream(seed: u64, kind: StreamKind, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = ((kind as u64) << 56) | ((a & 0x00ff_ffff) << 32) | (b & 0xffff_ffff);
    rng.set_stream(id);
    rng
}

/// Thread cap from `MINICONVNET_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Run `f` on a dedicated pool of `threads` workers. With `None`, runs on the
/// global pool.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}
