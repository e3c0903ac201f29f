/// Derives an independent 64-bit seed for item `index` from a master seed.
///
/// The rule is `splitmix64(master + (index + 1) * 0x9E3779B97F4A7C15)`, so
/// per-item streams never depend on how work is scheduled across threads.
pub fn sub_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
