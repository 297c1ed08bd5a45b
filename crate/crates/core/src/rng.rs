//! Deterministic child streams.
//!
//! Every independent unit of work (a channel-bit pair, a Monte Carlo sample
//! block, a sweep point) draws from its own generator, seeded from a hash of
//! the master seed and the unit's coordinates. Results therefore do not depend
//! on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all simulation streams.
pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a master seed and a coordinate path down to a 64-bit child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Child stream for the given coordinates.
pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, path))
}

/// Domain tags keep streams of different subsystems apart.
pub mod domain {
    pub const QKD: u64 = 0x0051_4B44;
    pub const TELEPORT: u64 = 0x0054_454C;
    pub const CROSSTALK: u64 = 0x0058_544B;
    pub const EVE_TAP: u64 = 0x0045_5645;
    pub const SWEEP: u64 = 0x0053_5750;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, &[1, 2]).random();
        let b: u64 = stream(7, &[1, 2]).random();
        let c: u64 = stream(7, &[2, 1]).random();
        let d: u64 = stream(8, &[1, 2]).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
