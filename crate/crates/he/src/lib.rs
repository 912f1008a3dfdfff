//! Homomorphic encryption backends for encrypted gradient aggregation.
//!
//! Two interchangeable implementations of [`HeBackend`]:
//!
//! * [`MockBackend`] keeps plaintext slot values and exact floating-point
//!   arithmetic, with optional Gaussian perturbation. It tracks levels like
//!   a real leveled scheme so depth violations surface identically.
//! * [`CkksBackend`] is a leveled RNS-CKKS implementation over power-of-two
//!   cyclotomics: canonical-embedding encoding, NTT arithmetic,
//!   relinearization and rotations by hybrid key switching, and rescaling.
//!
//! Vectors longer than one ciphertext are split into chunks of
//! `slot_count` slots; all vector-level operations work chunk by chunk and
//! scalar products combine the per-chunk rotate-and-sum results.

pub mod arith;
mod backend;
pub mod ckks;
pub mod encoding;
mod error;
pub mod mock;
pub mod ntt;
mod params;

pub use backend::{assemble, ChunkPlaintext, CiphertextVector, HeBackend, KeyMaterial, Plaintext};
pub use ckks::CkksBackend;
pub use error::{HeError, Result};
pub use mock::MockBackend;
pub use params::{HeParams, HePreset};
