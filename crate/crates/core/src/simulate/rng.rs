use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent noise channels of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamId {
    Quadrature1 = 1,
    Quadrature2 = 2,
    Force = 3,
}

/// Counter-based generator keyed by (seed, stream). Distinct streams of the
/// same seed never overlap.
pub fn noise_stream(seed: u64, stream: StreamId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
