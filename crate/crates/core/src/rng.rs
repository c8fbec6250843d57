//! Seed derivation for independent per-item random streams.
//!
//! Every stream is keyed by a tuple of 64-bit words folded through the
//! splitmix64 finalizer, then expanded into a xoshiro256++ state. Key tuples
//! always begin with a domain word, so streams for different purposes cannot
//! alias even when the remaining words coincide.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Stream = Xoshiro256PlusPlus;

pub const DOMAIN_EXAMPLE: u64 = 0x6578_616d_706c_6500; // "example\0"
pub const DOMAIN_SHUFFLE: u64 = 0x7368_7566_666c_6500; // "shuffle\0"
pub const DOMAIN_INIT: u64 = 0x696e_6974_0000_0000; // "init"
pub const DOMAIN_EPOCH: u64 = 0x6570_6f63_6800_0000; // "epoch"
pub const DOMAIN_GRADCHECK: u64 = 0x6772_6164_0000_0000; // "grad"

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(key: &[u64]) -> u64 {
    key.iter().fold(0x243f_6a88_85a3_08d3, |h, &word| {
        splitmix64(h ^ splitmix64(word))
    })
}

pub fn stream(key: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(key))
}
