//! Checksum-constrained EAN-13 decoding over per-digit probability outputs.
//!
//! The pieces:
//! - [`symbology`]: digit sequences, check digits, bar-pattern codec.
//! - [`imaging`]: rendering, seeded degradations, quarter-turn rotations, datasets.
//! - [`soft_decoder`]: a scanline template matcher producing 13x10 logit matrices.
//! - [`smart_inference`]: greedy decoding, gap-prioritized checksum search,
//!   rotation augmentation and voting.
//! - [`tinynet`]: a small multidigit classifier with cross-entropy and
//!   distillation training.
//! - [`eval_harness`]: accuracy/error reports, comparison grids, logit ingestion, CLI.

pub mod eval_harness;
pub mod imaging;
pub mod smart_inference;
pub mod soft_decoder;
pub mod symbology;
pub mod tinynet;

/// SplitMix64-style combination of two seeds.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_add(b.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
