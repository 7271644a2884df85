//! Seeding and counter-based substreams.
//!
//! Every random quantity is drawn from a substream keyed by
//! `(master seed, purpose tag, step, index)`. The key is folded through
//! SplitMix64:
//!
//! ```text
//! h = mix(seed ^ 0x7074_7072_6f63_0001)
//! h = mix(h ^ tag); h = mix(h ^ step); h = mix(h ^ index)
//! ```
//!
//! and the result seeds a Xoshiro256++ generator (itself expanded with
//! SplitMix64, as `seed_from_u64` does). Work can therefore be split across
//! any number of threads without changing a single draw.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

/// Purpose tags keep substreams of different subsystems disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    AisSample = 1,
    MhChain = 2,
    CftpDraw = 3,
    Oracle = 4,
    Replication = 5,
    Benchmark = 6,
    Sample = 7,
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tag: StreamTag, step: u64, index: u64) -> u64 {
    let mut h = splitmix64(master ^ 0x7074_7072_6f63_0001);
    h = splitmix64(h ^ tag as u64);
    h = splitmix64(h ^ step);
    splitmix64(h ^ index)
}

pub fn substream(master: u64, tag: StreamTag, step: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, tag, step, index))
}
