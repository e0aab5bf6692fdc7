//! Reproducible, splittable random streams.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha::ChaCha8Rng`) seeded
//! with `seed_from_u64(s)`. A child stream `s.child(i)` uses the seed
//! `splitmix64(s ^ splitmix64(i + 0x9E3779B97F4A7C15))`, so a replication's
//! stream depends only on its path of ids and never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RngState = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in a tree of seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

impl Seed {
    pub fn child(self, id: u64) -> Seed {
        Seed(splitmix64(self.0 ^ splitmix64(id.wrapping_add(0x9E37_79B9_7F4A_7C15))))
    }

    pub fn path(self, ids: &[u64]) -> Seed {
        ids.iter().fold(self, |s, &i| s.child(i))
    }

    pub fn rng(self) -> RngState {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
