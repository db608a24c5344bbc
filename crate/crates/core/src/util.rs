//! Small shared helpers.

/// splitmix64 step; a solid mixer for seed derivation.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a per-stage seed from a master seed and a stage tag, so that one
/// CLI seed drives every random stage without streams colliding.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    let mut state = splitmix64(master);
    for &byte in tag.as_bytes() {
        state = splitmix64(state ^ u64::from(byte));
    }
    state
}
