//! Named random substreams.
//!
//! Every draw site derives its own ChaCha8 stream from the master seed, a
//! site tag and the indices of the item being drawn, so adding groups,
//! scenarios or candidates never shifts anyone else's numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_DOORS: u64 = 0x646f_6f72;
pub const TAG_DISTANCE: u64 = 0x6469_7374;
pub const TAG_CELLS: u64 = 0x6365_6c6c;
pub const TAG_VOLUME: u64 = 0x766f_6c75;
pub const TAG_DISRUPT: u64 = 0x6472_7570;
pub const TAG_EPSILON: u64 = 0x6570_7369;
pub const TAG_MULTIPLIER: u64 = 0x6d75_6c74;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, tag: u64, idx: &[u64]) -> ChaCha8Rng {
    let mut s = splitmix64(seed ^ splitmix64(tag));
    for &i in idx {
        s = splitmix64(s ^ splitmix64(i.wrapping_add(0x5851_f42d_4c95_7f2d)));
    }
    ChaCha8Rng::seed_from_u64(s)
}
