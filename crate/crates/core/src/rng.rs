//! Seed derivation. Every random stream in the crate is a `ChaCha8Rng`
//! derived from one run seed plus a key, so runs are reproducible and
//! independent of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `seed` with an arbitrary key into a new 64-bit seed.
pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    key.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn keyed_rng(seed: u64, key: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, key))
}

/// The private stream of `node` for a run seeded with `seed`.
pub fn node_rng(seed: u64, node: usize) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(seed);
    rng.set_stream(node as u64 + 1);
    rng
}

// Domain tags so unrelated consumers of one seed never share a stream.
pub(crate) const TAG_PORTS: u64 = 0x504f_5254;
pub(crate) const TAG_SAMPLE: u64 = 0x5341_4d50;
pub(crate) const TAG_MATCH: u64 = 0x4d41_5443;
pub(crate) const TAG_CLASS: u64 = 0x434c_4153;
pub(crate) const TAG_PRIMES: u64 = 0x5052_494d;
pub(crate) const TAG_NET: u64 = 0x4e45_5457;
pub(crate) const TAG_CLUSTER: u64 = 0x434c_5553;
pub(crate) const TAG_QUERY: u64 = 0x5155_4552;
