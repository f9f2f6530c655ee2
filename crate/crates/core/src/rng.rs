//! Counter-based random streams.
//!
//! Every Monte Carlo path draws from its own ChaCha8 stream keyed by
//! `(master seed, experiment tag)` with the path index as the stream id, so
//! results do not depend on how paths are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable 64-bit tag for a named experiment stream.
pub fn tag(name: &str) -> u64 {
    name.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Stream for one path of one experiment.
pub fn path_stream(seed: u64, tag: u64, index: u64) -> PathRng {
    let mut key = [0u8; 32];
    let mut s = seed ^ tag.rotate_left(17);
    for chunk in key.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Runs `f` once per path in parallel. Output order follows the path index,
/// so any reduction over it is independent of the thread count.
pub fn par_map_paths<T, F>(paths: u64, seed: u64, tag: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &mut PathRng) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..paths)
        .into_par_iter()
        .map(|i| f(i, &mut path_stream(seed, tag, i)))
        .collect()
}
