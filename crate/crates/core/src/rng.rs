//! Seeded per-subject random streams.
//!
//! Each subject draws from its own ChaCha8 stream keyed by `(seed, index)`,
//! so generation and evaluation give identical results regardless of how the
//! work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Salt separating the stream families used by different consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Instance = 0,
    Subject = 1,
    Trajectory = 2,
    Rollout = 3,
    Training = 4,
}

pub fn stream(seed: u64, purpose: StreamPurpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((purpose as u64) << 56).rotate_left(7));
    rng.set_stream(index);
    rng
}
