use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::hashing::mix;

/// Rounds to 9 significant digits and prints the shortest representation
/// of the rounded value (`2.0`, `0.123456789`, `1e-12`).
pub fn fmt_f64(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded:?}")
}

pub fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialise")
}

/// Independent ChaCha stream for `(seed, purpose, index…)`.
pub fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut all = Vec::with_capacity(parts.len() + 1);
    all.push(seed);
    all.extend_from_slice(parts);
    ChaCha8Rng::seed_from_u64(mix(&all))
}

/// Stream tags so that different consumers of the run seed never share draws.
pub mod stream {
    pub const WALK: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const SYNTH: u64 = 5;
    pub const NEGATIVE: u64 = 6;
}

/// Maximum worker threads: `HDGNN_THREADS` when set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("HDGNN_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `f` inside a rayon pool honouring [`thread_cap`].
pub fn with_thread_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .unwrap_or_else(|_| panic!("failed to build a {n}-thread pool")),
        None => f(),
    }
}
