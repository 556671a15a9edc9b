//! Seeding scheme shared by every stochastic stage.
//!
//! A [`Seed`] is a 64-bit value that can be split into independent child
//! seeds by tag. Every generator in the crate is a ChaCha8 stream built from
//! a seed, so a run is reproducible bit for bit from its root seed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    pub fn new(value: u64) -> Self {
        Seed(value)
    }

    /// Derives an independent child seed. Distinct tags give unrelated
    /// streams; the same tag always gives the same child.
    pub fn child(self, tag: u64) -> Seed {
        Seed(mix64(mix64(self.0 ^ 0x5851_F42D_4C95_7F2D).wrapping_add(mix64(tag))))
    }

    /// Child seed keyed by a label and an index, e.g. `("dataset", 3)`.
    pub fn named(self, label: &str, index: u64) -> Seed {
        let mut h = 0xCBF2_9CE4_8422_2325u64;
        for b in label.bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.child(h).child(index)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for Seed {
    fn from(value: u64) -> Self {
        Seed(value)
    }
}

// splitmix64 finalizer
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
