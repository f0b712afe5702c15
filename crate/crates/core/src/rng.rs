//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, operation, block)`: the seed
//! keys a ChaCha8 generator, the operation selects its stream and the block
//! index fixes the word position. Work split into blocks therefore draws
//! the same numbers regardless of how blocks are scheduled on threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Samples per block in block-parallel Monte Carlo loops.
pub const BLOCK: usize = 4096;

/// 32-bit words reserved per block.
const WORDS_PER_BLOCK: u128 = 1 << 32;

/// Stream identifiers, one per kind of randomized operation.
pub mod op {
    pub const SLICE_SAMPLES: u64 = 1;
    pub const SLICE_SHELL: u64 = 2;
    pub const AXIOMS: u64 = 3;
    pub const STARTS: u64 = 4;
    pub const SUBSPACE: u64 = 5;
    pub const FINAL: u64 = 6;
    pub const CONVEXITY: u64 = 7;
    pub const GROUP_LAW: u64 = 8;
}

pub fn stream(seed: u64, operation: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(operation);
    rng.set_word_pos(block as u128 * WORDS_PER_BLOCK);
    rng
}

/// Derives a child seed, e.g. one per subspace in a sweep.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Number of blocks covering `n` samples and the size of block `b`.
pub fn blocks(n: usize) -> usize {
    n.div_ceil(BLOCK)
}

pub fn block_len(n: usize, b: usize) -> usize {
    BLOCK.min(n - b * BLOCK)
}
