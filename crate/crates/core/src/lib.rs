//! Reputation-based fair federated learning with an encrypted aggregation
//! path.
//!
//! The crate trains small multilayer perceptrons on partitioned synthetic
//! (or imported) data and runs four schemes over them: local-only
//! training, FedSGD, the plaintext reputation scheme FFLX and its
//! homomorphically encrypted counterpart GBPPFFL. Encryption goes through
//! the [`fairfed_he`] backends: an exact mock for bit-level replay tests
//! and RNS-CKKS for the real thing.

pub mod data;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod nn;
pub mod protocol;
pub mod seeds;

pub use error::{Error, Result};
pub use fairfed_he as he;
