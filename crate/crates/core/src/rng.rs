//! Deterministic stream derivation.
//!
//! Every random draw in a run comes from a ChaCha8 stream keyed by
//! `(master_seed, id, scale)`. The id space is partitioned so no two draw
//! sites can collide:
//!
//! - `0 .. 2^20`: candidate slots (residual sampling for slot j at scale k)
//! - `2^20 ..`: reward-noise streams, `ID_REWARD_NOISE_BASE + slot`
//! - `2^21`: the multinomial draw of a resampling event
//! - `2^21 + 1`: K-Means seeding at a clustering event
//! - `2^21 + 2`: the final-scale strategy draw (importance sampling)
//! - `2^22 ..`: per-replicate master seeds, `ID_REPLICATE_BASE + rep`
//!
//! Slot-keyed streams are what make runs independent of worker count: a
//! candidate's randomness depends only on which slot it occupies at which
//! scale, never on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SCALE_SPACE: u64 = 1 << 10;

/// First id reserved for per-slot reward-noise streams.
pub const ID_REWARD_NOISE_BASE: u64 = 1 << 20;
/// Id of the multinomial draw at a resampling event.
pub const ID_RESAMPLE_EVENT: u64 = 1 << 21;
/// Id of the K-Means seeding stream at a clustering event.
pub const ID_CLUSTER_EVENT: u64 = (1 << 21) + 1;
/// Id of the final-scale selection draw.
pub const ID_FINAL_DRAW: u64 = (1 << 21) + 2;
/// First id reserved for replicate seed derivation.
pub const ID_REPLICATE_BASE: u64 = 1 << 22;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `(candidate_id, scale)` stream under `master`.
///
/// Distinct `(candidate_id, scale)` pairs give distinct seeds for
/// `candidate_id < 2^54` and `scale < 2^10`: the key map is injective there
/// and both the golden-ratio affine step and the splitmix finalizer are
/// bijections on u64.
pub fn derive_seed(master: u64, candidate_id: u64, scale: u64) -> u64 {
    debug_assert!(scale < SCALE_SPACE, "scale {scale} outside keyed range");
    let key = candidate_id.wrapping_mul(SCALE_SPACE).wrapping_add(scale);
    splitmix64(master.wrapping_add(GOLDEN.wrapping_mul(key.wrapping_add(1))))
}

/// Fresh ChaCha8 stream for `(candidate_id, scale)` under `master`.
pub fn derive_rng(master: u64, candidate_id: u64, scale: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, candidate_id, scale))
}

/// Master seed for replicate `rep` of a multi-replicate experiment.
pub fn replicate_seed(master: u64, rep: usize) -> u64 {
    derive_seed(master, ID_REPLICATE_BASE + rep as u64, 0)
}
