//! The 64-bit avalanche mixer shared by every hash-based selection.
//!
//! `mix64` is the SplitMix64 finalizer:
//!
//! ```text
//! z = (z ^ (z >> 30)) * 0xbf58_476d_1ce4_e5b9
//! z = (z ^ (z >> 27)) * 0x94d0_49bb_1331_11eb
//! z =  z ^ (z >> 31)
//! ```
//!
//! Multiplications wrap. Selection always hashes `flow_key ^ salt`, where the salt of a switch
//! is its node id, so neighbouring switches make decorrelated choices for the same flow.

pub const MIX_C1: u64 = 0xbf58_476d_1ce4_e5b9;
pub const MIX_C2: u64 = 0x94d0_49bb_1331_11eb;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_C1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_C2);
    z ^ (z >> 31)
}

/// Index in `0..n` for a flow at a switch. `n` must be non-zero.
#[inline]
pub fn hash_index(flow_key: u64, salt: u64, n: u64) -> u64 {
    mix64(flow_key ^ salt) % n
}
