use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags so independent consumers of one master seed never share a
/// random stream.
pub(crate) const DOMAIN_SCREEN: u64 = 0x5343_5245_454e;
pub(crate) const DOMAIN_SCAN: u64 = 0x5343_414e;
pub(crate) const DOMAIN_REPEAT: u64 = 0x5245_5045_4154;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a domain tag into a new seed.
pub(crate) fn derive_seed(seed: u64, domain: u64) -> u64 {
    splitmix64(seed ^ splitmix64(domain))
}

/// Counter-style stream: the same `(seed, domain, index)` always yields the
/// same generator, regardless of the order streams are requested in.
pub(crate) fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, domain));
    rng.set_stream(index);
    rng
}
