//! Plaintext-carrying backend with the same level accounting as CKKS.
//!
//! With zero noise every operation is the plain floating-point operation,
//! so encrypted protocol runs can be replayed bit-for-bit in plaintext. A
//! positive `noise_std` perturbs each encryption and each multiplication
//! output with i.i.d. Gaussian noise to imitate approximate arithmetic.

use std::sync::Mutex;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::backend::{
    assemble, check_same_shape, require_level, ChunkPlaintext, CiphertextVector, HeBackend,
    KeyMaterial,
};
use crate::error::{HeError, Result};
use crate::params::HeParams;

#[derive(Clone, Debug)]
pub struct MockChunk {
    slots: Vec<f64>,
    key_id: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MockPublicKey {
    id: u64,
}

#[derive(Debug, PartialEq, Eq)]
pub struct MockSecretKey {
    id: u64,
}

#[derive(Debug)]
pub struct MockEvaluationKey;

#[derive(Debug)]
pub struct MockBackend {
    params: HeParams,
    noise: Option<(Normal<f64>, Mutex<ChaCha8Rng>)>,
}

impl MockBackend {
    pub fn new(params: HeParams) -> Result<Self> {
        Self::with_noise(params, 0.0, 0)
    }

    pub fn with_noise(params: HeParams, noise_std: f64, seed: u64) -> Result<Self> {
        params.validate()?;
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(HeError::InvalidParams(format!(
                "noise std {noise_std} must be finite and >= 0"
            )));
        }
        let noise = (noise_std > 0.0).then(|| {
            (
                Normal::new(0.0, noise_std).expect("validated std"),
                Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
            )
        });
        Ok(Self { params, noise })
    }

    fn perturb(&self, slots: &mut [f64]) {
        if let Some((dist, rng)) = &self.noise {
            let mut rng = rng.lock().expect("noise rng poisoned");
            for s in slots {
                *s += dist.sample(&mut *rng);
            }
        }
    }
}

impl HeBackend for MockBackend {
    type PublicKey = MockPublicKey;
    type SecretKey = MockSecretKey;
    type EvaluationKey = MockEvaluationKey;
    type Chunk = MockChunk;

    fn name(&self) -> &'static str {
        "mock"
    }

    fn params(&self) -> &HeParams {
        &self.params
    }

    fn keygen(&self, seed: u64) -> KeyMaterial<Self> {
        let id = ChaCha8Rng::seed_from_u64(seed).next_u64();
        KeyMaterial {
            public: MockPublicKey { id },
            secret: MockSecretKey { id },
            evaluation: MockEvaluationKey,
        }
    }

    fn encrypt_chunk<R: RngCore + ?Sized>(
        &self,
        pk: &Self::PublicKey,
        values: &[f64],
        rng: &mut R,
    ) -> MockChunk {
        let mut slots = vec![0.0; self.slot_count()];
        slots[..values.len()].copy_from_slice(values);
        if let Some((dist, _)) = &self.noise {
            for s in slots.iter_mut() {
                *s += dist.sample(rng);
            }
        }
        MockChunk {
            slots,
            key_id: pk.id,
        }
    }

    fn decrypt_chunk(&self, sk: &Self::SecretKey, chunk: &MockChunk) -> Vec<f64> {
        if sk.id == chunk.key_id {
            chunk.slots.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(sk.id ^ chunk.key_id);
            (0..chunk.slots.len())
                .map(|_| rng.random_range(-1e6..1e6))
                .collect()
        }
    }

    fn add_chunk(&self, a: &MockChunk, b: &MockChunk) -> Result<MockChunk> {
        Ok(MockChunk {
            slots: a.slots.iter().zip(&b.slots).map(|(x, y)| x + y).collect(),
            key_id: a.key_id,
        })
    }

    fn sub_chunk(&self, a: &MockChunk, b: &MockChunk) -> Result<MockChunk> {
        Ok(MockChunk {
            slots: a.slots.iter().zip(&b.slots).map(|(x, y)| x - y).collect(),
            key_id: a.key_id,
        })
    }

    fn pmult_chunk(
        &self,
        plain: ChunkPlaintext<'_>,
        c: &MockChunk,
        level: usize,
    ) -> Result<MockChunk> {
        require_level(level, 1)?;
        let mut slots = match plain {
            ChunkPlaintext::Scalar(s) => c.slots.iter().map(|x| s * x).collect::<Vec<_>>(),
            ChunkPlaintext::Slots(p) => c
                .slots
                .iter()
                .enumerate()
                .map(|(k, x)| p.get(k).copied().unwrap_or(0.0) * x)
                .collect(),
        };
        self.perturb(&mut slots);
        Ok(MockChunk {
            slots,
            key_id: c.key_id,
        })
    }

    fn cmult_chunk(
        &self,
        _ek: &MockEvaluationKey,
        a: &MockChunk,
        b: &MockChunk,
        level: usize,
    ) -> Result<MockChunk> {
        require_level(level, 1)?;
        let mut slots: Vec<f64> = a.slots.iter().zip(&b.slots).map(|(x, y)| x * y).collect();
        self.perturb(&mut slots);
        Ok(MockChunk {
            slots,
            key_id: a.key_id,
        })
    }

    fn sum_slots_chunk(
        &self,
        _ek: &MockEvaluationKey,
        c: &MockChunk,
        _level: usize,
    ) -> Result<MockChunk> {
        let total = c.slots.iter().fold(0.0, |acc, x| acc + x);
        Ok(MockChunk {
            slots: vec![total; c.slots.len()],
            key_id: c.key_id,
        })
    }

    fn drop_chunk(&self, c: &MockChunk, from: usize, to: usize) -> Result<MockChunk> {
        if to > from {
            return Err(HeError::LevelRaise { from, to });
        }
        Ok(c.clone())
    }

    /// Left-to-right accumulation over every slot of every chunk, so the
    /// result equals a sequential plaintext dot product bit-for-bit.
    fn dot(
        &self,
        _ek: &MockEvaluationKey,
        a: &CiphertextVector<MockChunk>,
        b: &CiphertextVector<MockChunk>,
    ) -> Result<CiphertextVector<MockChunk>> {
        check_same_shape(a, b)?;
        require_level(a.level(), 1)?;
        let mut total = 0.0;
        for (x, y) in a.chunks().iter().zip(b.chunks()) {
            for (p, q) in x.slots.iter().zip(&y.slots) {
                total += p * q;
            }
        }
        let mut total = [total];
        self.perturb(&mut total);
        let slots = vec![total[0]; self.slot_count()];
        let key_id = a.chunks()[0].key_id;
        Ok(assemble(
            vec![MockChunk { slots, key_id }],
            1,
            a.level() - 1,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Plaintext;

    fn setup() -> (MockBackend, KeyMaterial<MockBackend>) {
        let params = HeParams {
            ring_dimension: 16,
            ..HeParams::test()
        };
        let b = MockBackend::new(params).unwrap();
        let k = b.keygen(5);
        (b, k)
    }

    #[test]
    fn roundtrip_is_exact() {
        let (b, k) = setup();
        let v: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let c = b.encrypt(&k.public, &v, &mut rand::rng()).unwrap();
        assert_eq!(c.chunk_count(), 3);
        assert_eq!(b.decrypt(&k.secret, &c), v);
    }

    #[test]
    fn dot_is_sequential_sum() {
        let (b, k) = setup();
        let x: Vec<f64> = (0..19).map(|i| 0.1 * i as f64 - 0.7).collect();
        let y: Vec<f64> = (0..19).map(|i| (i as f64 * 0.37).cos()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cx = b.encrypt(&k.public, &x, &mut rng).unwrap();
        let cy = b.encrypt(&k.public, &y, &mut rng).unwrap();
        let d = b.dot(&k.evaluation, &cx, &cy).unwrap();
        let expected = x.iter().zip(&y).fold(0.0, |acc, (p, q)| acc + p * q);
        assert_eq!(b.decrypt(&k.secret, &d), vec![expected]);
        assert_eq!(d.level(), 1);
    }

    #[test]
    fn depth_is_enforced() {
        let (b, k) = setup();
        let c = b.encrypt(&k.public, &[1.0, 2.0], &mut rand::rng()).unwrap();
        let c1 = b.pmult(Plaintext::Scalar(0.5), &c).unwrap();
        let c0 = b.cmult(&k.evaluation, &c1, &c1).unwrap();
        assert_eq!(c0.level(), 0);
        assert!(matches!(
            b.pmult(Plaintext::Scalar(2.0), &c0),
            Err(HeError::LevelExhausted { .. })
        ));
        assert!(b.dot(&k.evaluation, &c0, &c0).is_err());
        assert!(matches!(b.add(&c, &c1), Err(HeError::LevelMismatch { .. })));
    }

    #[test]
    fn wrong_key_gives_garbage() {
        let (b, k) = setup();
        let other = b.keygen(6);
        let c = b.encrypt(&k.public, &[0.5], &mut rand::rng()).unwrap();
        assert_ne!(b.decrypt(&other.secret, &c), vec![0.5]);
    }

    #[test]
    fn noise_perturbs() {
        let params = HeParams {
            ring_dimension: 16,
            ..HeParams::test()
        };
        let b = MockBackend::with_noise(params, 1e-3, 9).unwrap();
        let k = b.keygen(1);
        let c = b
            .encrypt(&k.public, &[0.5; 8], &mut ChaCha8Rng::seed_from_u64(2))
            .unwrap();
        let d = b.decrypt(&k.secret, &c);
        assert!(d.iter().any(|x| *x != 0.5));
        assert!(d.iter().all(|x| (x - 0.5).abs() < 1e-2));
    }
}
