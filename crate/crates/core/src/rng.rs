//! Named random streams derived from a single run seed.
//!
//! Every consumer of randomness asks for a stream by purpose (`"init"`,
//! `"pivots"`, `"shuffle"`, ...). Streams are independent, so adding draws
//! to one never shifts the numbers another sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// 64-bit FNV-1a over the purpose name.
fn stream_id(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Generator for `(seed, purpose)`.
pub fn stream(seed: u64, purpose: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(purpose));
    rng
}

/// Generator for `(seed, purpose, index)`, e.g. one per graph in a dataset.
pub fn indexed_stream(seed: u64, purpose: &str, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(stream_id(purpose));
    rng
}
