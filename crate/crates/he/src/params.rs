use serde::{Deserialize, Serialize};

use crate::error::{HeError, Result};

/// Named parameter sets selectable from configuration files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HePreset {
    /// Ring 2^12, 40-bit scale: fast enough for unit tests. Not a secure size.
    #[default]
    Test,
    /// Ring 2^14, scale 2^50, first modulus 2^60, depth 2.
    Standard,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeParams {
    pub ring_dimension: usize,
    /// log2 of the scaling factor; the intermediate primes sit next to it.
    pub scaling_bits: u32,
    /// log2 of the first (decryption) modulus.
    pub first_modulus_bits: u32,
    pub multiplicative_depth: usize,
    /// log2 of the key-switching prime.
    pub special_modulus_bits: u32,
    /// Upper bound on ciphertext chunks per vector.
    pub max_chunks: usize,
}

impl HeParams {
    pub const MIN_RING_DIMENSION: usize = 16;
    pub const MAX_RING_DIMENSION: usize = 1 << 16;

    pub fn test() -> Self {
        Self {
            ring_dimension: 1 << 12,
            scaling_bits: 40,
            first_modulus_bits: 60,
            multiplicative_depth: 2,
            special_modulus_bits: 61,
            max_chunks: 64,
        }
    }

    pub fn standard() -> Self {
        Self {
            ring_dimension: 1 << 14,
            scaling_bits: 50,
            first_modulus_bits: 60,
            multiplicative_depth: 2,
            special_modulus_bits: 61,
            max_chunks: 64,
        }
    }

    pub fn preset(preset: HePreset) -> Self {
        match preset {
            HePreset::Test => Self::test(),
            HePreset::Standard => Self::standard(),
        }
    }

    pub fn slot_count(&self) -> usize {
        self.ring_dimension / 2
    }

    pub fn capacity(&self) -> usize {
        self.slot_count() * self.max_chunks
    }

    pub fn chunks_for(&self, length: usize) -> usize {
        length.div_ceil(self.slot_count())
    }

    pub fn scale(&self) -> f64 {
        2f64.powi(self.scaling_bits as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.ring_dimension;
        if !n.is_power_of_two()
            || !(Self::MIN_RING_DIMENSION..=Self::MAX_RING_DIMENSION).contains(&n)
        {
            return Err(HeError::InvalidParams(format!(
                "ring dimension {n} must be a power of two in [{}, {}]",
                Self::MIN_RING_DIMENSION,
                Self::MAX_RING_DIMENSION
            )));
        }
        if self.multiplicative_depth < 2 {
            return Err(HeError::InvalidParams(format!(
                "multiplicative depth {} is below the required 2",
                self.multiplicative_depth
            )));
        }
        if !(20..=60).contains(&self.scaling_bits) {
            return Err(HeError::InvalidParams(format!(
                "scaling factor 2^{} outside [2^20, 2^60]",
                self.scaling_bits
            )));
        }
        if self.first_modulus_bits <= self.scaling_bits || self.first_modulus_bits > 61 {
            return Err(HeError::InvalidParams(format!(
                "first modulus 2^{} must exceed the scale and stay below 2^62",
                self.first_modulus_bits
            )));
        }
        if self.special_modulus_bits < self.first_modulus_bits || self.special_modulus_bits > 61 {
            return Err(HeError::InvalidParams(format!(
                "special modulus 2^{} must be at least the first modulus and below 2^62",
                self.special_modulus_bits
            )));
        }
        if self.max_chunks == 0 {
            return Err(HeError::InvalidParams("max_chunks must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        HeParams::test().validate().unwrap();
        HeParams::standard().validate().unwrap();
        assert_eq!(HeParams::standard().slot_count(), 8192);
        assert_eq!(HeParams::test().chunks_for(3000), 2);
    }

    #[test]
    fn rejects_bad_ring() {
        let mut p = HeParams::test();
        p.ring_dimension = 3000;
        assert!(p.validate().is_err());
        p.ring_dimension = 1 << 20;
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_shallow_depth() {
        let mut p = HeParams::test();
        p.multiplicative_depth = 1;
        assert!(p.validate().is_err());
    }
}
