/// SplitMix64 finaliser over a master seed and a path of stream tags.
/// Streams derived from distinct paths are statistically independent.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut z = master;
    for &tag in path {
        z = mix(z ^ mix(tag.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    mix(z)
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
