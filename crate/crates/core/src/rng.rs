//! Counter-based random substreams.
//!
//! Every random draw in the crate is addressed by `(seed, stream, step)`.
//! `stream` is usually a trajectory (or round) index and `step` the position
//! along that trajectory, so any execution order reproduces the same numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Words reserved per step inside a stream. 2^32 words is far more than any
/// single step consumes, even at d in the tens of thousands.
const STEP_WORDS_LOG2: u32 = 32;

/// A generator positioned at the start of substream `(seed, stream, step)`.
pub fn substream(seed: u64, stream: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((step as u128) << STEP_WORDS_LOG2);
    rng
}

/// Mix a label into a seed so distinct purposes (target draws, blur noise,
/// TV rounds, ...) never share a substream family.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    splitmix64(seed ^ splitmix64(label.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

/// Stable 64-bit label for a string tag.
pub fn label(tag: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Standard normal vector drawn from substream `(seed, stream, step)`.
pub fn normal_vec(seed: u64, stream: u64, step: u64, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    fill_standard_normal(&mut substream(seed, stream, step), &mut out);
    out
}
