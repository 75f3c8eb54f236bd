//! Deterministic numeric primitives: dense matrices, seeded RNG, and the
//! scalar/elementwise functions used by every other module.
//!
//! Everything here is 64-bit float with fixed accumulation order, so a
//! run is bitwise-reproducible from its seed.

mod matrix;
mod ops;
mod rng;

pub use matrix::Matrix;
pub use ops::{
    logistic, normalize_direction, normalize_direction_backward, relu, softmax_rows, softplus,
};
pub use rng::{
    epoch_stream, SeededRng, STREAM_FIXTURE, STREAM_INIT, STREAM_NEGATIVE, STREAM_SHUFFLE,
    STREAM_SPLIT,
};

use std::sync::OnceLock;

static MATH_POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();

/// Thread pool for row-parallel matmul. Defaults to one thread (strict
/// bitwise mode); the `FF_TRAINER_THREADS` env var raises the cap. Row
/// splitting preserves per-element accumulation order, so output is
/// bitwise identical at any thread count.
pub(crate) fn math_pool() -> &'static rayon::ThreadPool {
    MATH_POOL.get_or_init(|| {
        let threads = std::env::var("FF_TRAINER_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n >= 1)
            .unwrap_or(1);
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("math thread pool")
    })
}
