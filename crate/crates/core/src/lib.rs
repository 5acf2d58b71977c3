//! Benchmark framework for partial domain adaptation.

pub mod datagen;
pub mod diffcore;
mod error;
pub mod harness;
pub mod methods;
pub mod nets;
pub mod ot;
pub mod selection;

pub use error::{Error, Result};

/// Deterministic child seed for a labelled purpose (FNV-1a over the label,
/// mixed with the parent through splitmix64).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
