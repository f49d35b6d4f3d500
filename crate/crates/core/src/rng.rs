//! Seed derivation.
//!
//! A single top-level seed is expanded into independent streams by hashing
//! `(seed, purpose, index)` with the SplitMix64 finalizer:
//!
//! ```text
//! s = splitmix(seed ^ splitmix(purpose_tag) ^ splitmix(index + 0x9E37_79B9_7F4A_7C15))
//! ```
//!
//! where `purpose_tag` is a fixed constant per [`Stream`]. The derived value
//! seeds a ChaCha8 generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data,
    Noise,
    Init,
    Validation,
    Evaluation,
    Power,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Data => 0x6461_7461,
            Stream::Noise => 0x6e6f_6973,
            Stream::Init => 0x696e_6974,
            Stream::Validation => 0x7661_6c69,
            Stream::Evaluation => 0x6576_616c,
            Stream::Power => 0x706f_7765,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    splitmix(seed ^ splitmix(stream.tag()) ^ splitmix(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream, index))
}
