//! Deterministic seed derivation.
//!
//! Every random stream in a run is derived from the single run seed plus a
//! purpose tag and integer coordinates (epoch, pair, ...). Streams therefore
//! never depend on thread count or on how many draws another stream consumed.

/// splitmix64 finalizer; bijective, well-mixed.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream identified by `tag` and `parts` under `seed`.
pub fn derive(seed: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut h = mix(seed);
    for chunk in tag.as_bytes().chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = mix(h ^ u64::from_le_bytes(word));
    }
    for &p in parts {
        h = mix(h ^ p);
    }
    h
}
