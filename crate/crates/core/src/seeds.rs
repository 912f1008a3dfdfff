//! Named random substreams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Data,
    Init,
    Batching,
    Masks,
    Encryption,
    Keys,
    MockNoise,
}

impl Stream {
    fn tag(self) -> &'static [u8] {
        match self {
            Stream::Data => b"data",
            Stream::Init => b"init",
            Stream::Batching => b"batching",
            Stream::Masks => b"masks",
            Stream::Encryption => b"encryption",
            Stream::Keys => b"keys",
            Stream::MockNoise => b"mock-noise",
        }
    }
}

/// Generator for `stream`, further keyed by `indices` (round, participant, ...).
pub fn rng(master: u64, stream: Stream, indices: &[u64]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(seed_bytes(master, stream, indices))
}

pub fn seed_u64(master: u64, stream: Stream, indices: &[u64]) -> u64 {
    let bytes = seed_bytes(master, stream, indices);
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}

fn seed_bytes(master: u64, stream: Stream, indices: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stream.tag());
    for i in indices {
        h.update(i.to_le_bytes());
    }
    h.finalize().into()
}
