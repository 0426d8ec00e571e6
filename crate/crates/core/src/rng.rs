//! Per-path random streams.
//!
//! Each Monte-Carlo path owns two ChaCha8 streams keyed by `(seed, path)`: one
//! for the disturbance and one for randomized policies. ChaCha is
//! counter-based, so a path's draws do not depend on how many other paths run
//! or in which order.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Noise = 0,
    Policy = 1,
}

/// The stream for `purpose` on path `path` under master `seed`.
pub fn path_stream(seed: u64, path: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path.wrapping_mul(2).wrapping_add(purpose as u64));
    rng
}

/// Uniform draw in `[0, 1)` with 53 random bits.
pub fn uniform(rng: &mut dyn RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
