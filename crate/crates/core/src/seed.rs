//! Seed splitting.
//!
//! Every random decision in a run is drawn from a ChaCha8 stream whose seed is
//! derived from one master seed and a stream tag:
//!
//! ```text
//! stream_seed = splitmix64(master ^ fnv1a64(tag))
//! ```
//!
//! Tags in use: `"data"`, `"data-test"`, `"data-val"`, `"init"`, `"shuffle"`,
//! `"aux"`, `"mask"`, `"identifier"`, `"noise"`, `"probe"`, `"random-prune"`,
//! `"finetune"`, `"split"`. Streams are independent, so adding a consumer
//! never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325_u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of the named stream.
pub fn derive(master: u64, tag: &str) -> u64 {
    splitmix64(master ^ fnv1a64(tag.as_bytes()))
}

/// Opens the named stream.
pub fn stream(master: u64, tag: &str) -> Rng {
    Rng::seed_from_u64(derive(master, tag))
}
