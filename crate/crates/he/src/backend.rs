//! Backend-independent vector layer: chunked packing, level accounting and
//! the five homomorphic operations on [`CiphertextVector`]s.

use rand::RngCore;

use crate::error::{HeError, Result};
use crate::params::HeParams;

/// A real vector packed into ordered single-ciphertext chunks. Padding
/// slots past `logical_length` hold exact zeros at encryption time.
#[derive(Clone, Debug)]
pub struct CiphertextVector<C> {
    chunks: Vec<C>,
    logical_length: usize,
    level: usize,
}

impl<C> CiphertextVector<C> {
    pub fn chunks(&self) -> &[C] {
        &self.chunks
    }

    pub fn logical_length(&self) -> usize {
        self.logical_length
    }

    /// Remaining multiplicative depth.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }
}

/// Plaintext multiplicand for [`HeBackend::pmult`].
#[derive(Clone, Copy, Debug)]
pub enum Plaintext<'a> {
    Scalar(f64),
    Vector(&'a [f64]),
}

/// Per-chunk view of a [`Plaintext`].
#[derive(Clone, Copy, Debug)]
pub enum ChunkPlaintext<'a> {
    Scalar(f64),
    Slots(&'a [f64]),
}

pub struct KeyMaterial<B: HeBackend + ?Sized> {
    pub public: B::PublicKey,
    pub secret: B::SecretKey,
    pub evaluation: B::EvaluationKey,
}

/// An encryption scheme with packed real slots.
///
/// Backends implement the per-chunk primitives; the provided methods take
/// care of chunking and reject level or length violations before any
/// chunk is touched.
pub trait HeBackend: Send + Sync {
    type PublicKey: Clone + Send + Sync;
    type SecretKey: Send + Sync;
    type EvaluationKey: Send + Sync;
    type Chunk: Clone + Send + Sync + std::fmt::Debug;

    fn name(&self) -> &'static str;

    fn params(&self) -> &HeParams;

    fn keygen(&self, seed: u64) -> KeyMaterial<Self>;

    fn encrypt_chunk<R: RngCore + ?Sized>(
        &self,
        pk: &Self::PublicKey,
        slots: &[f64],
        rng: &mut R,
    ) -> Self::Chunk;

    /// All `slot_count` slots of a chunk.
    fn decrypt_chunk(&self, sk: &Self::SecretKey, chunk: &Self::Chunk) -> Vec<f64>;

    fn add_chunk(&self, a: &Self::Chunk, b: &Self::Chunk) -> Result<Self::Chunk>;

    fn sub_chunk(&self, a: &Self::Chunk, b: &Self::Chunk) -> Result<Self::Chunk>;

    /// Multiplies and rescales; the result is one level lower.
    fn pmult_chunk(
        &self,
        plain: ChunkPlaintext<'_>,
        c: &Self::Chunk,
        level: usize,
    ) -> Result<Self::Chunk>;

    /// Multiplies, relinearizes and rescales; the result is one level lower.
    fn cmult_chunk(
        &self,
        ek: &Self::EvaluationKey,
        a: &Self::Chunk,
        b: &Self::Chunk,
        level: usize,
    ) -> Result<Self::Chunk>;

    /// Rotate-and-sum: every slot ends up holding the sum of all slots.
    fn sum_slots_chunk(
        &self,
        ek: &Self::EvaluationKey,
        c: &Self::Chunk,
        level: usize,
    ) -> Result<Self::Chunk>;

    /// Modulus switch without rescaling.
    fn drop_chunk(&self, c: &Self::Chunk, from: usize, to: usize) -> Result<Self::Chunk>;

    fn slot_count(&self) -> usize {
        self.params().slot_count()
    }

    fn max_level(&self) -> usize {
        self.params().multiplicative_depth
    }

    fn encrypt<R: RngCore + ?Sized>(
        &self,
        pk: &Self::PublicKey,
        values: &[f64],
        rng: &mut R,
    ) -> Result<CiphertextVector<Self::Chunk>> {
        if values.is_empty() {
            return Err(HeError::Empty);
        }
        let capacity = self.params().capacity();
        if values.len() > capacity {
            return Err(HeError::CapacityExceeded {
                length: values.len(),
                capacity,
            });
        }
        let chunks = values
            .chunks(self.slot_count())
            .map(|slots| self.encrypt_chunk(pk, slots, rng))
            .collect();
        Ok(CiphertextVector {
            chunks,
            logical_length: values.len(),
            level: self.max_level(),
        })
    }

    fn decrypt(&self, sk: &Self::SecretKey, c: &CiphertextVector<Self::Chunk>) -> Vec<f64> {
        let mut out = Vec::with_capacity(c.chunks.len() * self.slot_count());
        for chunk in &c.chunks {
            out.extend(self.decrypt_chunk(sk, chunk));
        }
        out.truncate(c.logical_length);
        out
    }

    fn add(
        &self,
        a: &CiphertextVector<Self::Chunk>,
        b: &CiphertextVector<Self::Chunk>,
    ) -> Result<CiphertextVector<Self::Chunk>> {
        check_same_shape(a, b)?;
        zip_chunks(a, b, a.level, |x, y| self.add_chunk(x, y))
    }

    fn sub(
        &self,
        a: &CiphertextVector<Self::Chunk>,
        b: &CiphertextVector<Self::Chunk>,
    ) -> Result<CiphertextVector<Self::Chunk>> {
        check_same_shape(a, b)?;
        zip_chunks(a, b, a.level, |x, y| self.sub_chunk(x, y))
    }

    fn pmult(
        &self,
        plain: Plaintext<'_>,
        c: &CiphertextVector<Self::Chunk>,
    ) -> Result<CiphertextVector<Self::Chunk>> {
        require_level(c.level, 1)?;
        if let Plaintext::Vector(v) = plain {
            if v.len() != c.logical_length {
                return Err(HeError::LengthMismatch {
                    left: v.len(),
                    right: c.logical_length,
                });
            }
        }
        let slots = self.slot_count();
        let chunks = c
            .chunks
            .iter()
            .enumerate()
            .map(|(k, chunk)| {
                let part = match plain {
                    Plaintext::Scalar(s) => ChunkPlaintext::Scalar(s),
                    Plaintext::Vector(v) => {
                        ChunkPlaintext::Slots(&v[k * slots..((k + 1) * slots).min(v.len())])
                    }
                };
                self.pmult_chunk(part, chunk, c.level)
            })
            .collect::<Result<_>>()?;
        Ok(CiphertextVector {
            chunks,
            logical_length: c.logical_length,
            level: c.level - 1,
        })
    }

    fn cmult(
        &self,
        ek: &Self::EvaluationKey,
        a: &CiphertextVector<Self::Chunk>,
        b: &CiphertextVector<Self::Chunk>,
    ) -> Result<CiphertextVector<Self::Chunk>> {
        check_same_shape(a, b)?;
        require_level(a.level, 1)?;
        zip_chunks(a, b, a.level - 1, |x, y| {
            self.cmult_chunk(ek, x, y, a.level)
        })
    }

    /// Scalar product; slot 0 of the single result chunk holds the sum over
    /// all chunks.
    fn dot(
        &self,
        ek: &Self::EvaluationKey,
        a: &CiphertextVector<Self::Chunk>,
        b: &CiphertextVector<Self::Chunk>,
    ) -> Result<CiphertextVector<Self::Chunk>> {
        check_same_shape(a, b)?;
        require_level(a.level, 1)?;
        let mut total: Option<Self::Chunk> = None;
        for (x, y) in a.chunks.iter().zip(&b.chunks) {
            let product = self.cmult_chunk(ek, x, y, a.level)?;
            let summed = self.sum_slots_chunk(ek, &product, a.level - 1)?;
            total = Some(match total {
                None => summed,
                Some(t) => self.add_chunk(&t, &summed)?,
            });
        }
        Ok(CiphertextVector {
            chunks: vec![total.expect("vectors are never empty")],
            logical_length: 1,
            level: a.level - 1,
        })
    }

    fn drop_to_level(
        &self,
        c: &CiphertextVector<Self::Chunk>,
        level: usize,
    ) -> Result<CiphertextVector<Self::Chunk>> {
        if level > c.level {
            return Err(HeError::LevelRaise {
                from: c.level,
                to: level,
            });
        }
        if level == c.level {
            return Ok(c.clone());
        }
        let chunks = c
            .chunks
            .iter()
            .map(|chunk| self.drop_chunk(chunk, c.level, level))
            .collect::<Result<_>>()?;
        Ok(CiphertextVector {
            chunks,
            logical_length: c.logical_length,
            level,
        })
    }

    /// Brings both operands to the lower of their levels.
    fn align(
        &self,
        a: &CiphertextVector<Self::Chunk>,
        b: &CiphertextVector<Self::Chunk>,
    ) -> Result<(CiphertextVector<Self::Chunk>, CiphertextVector<Self::Chunk>)> {
        let level = a.level.min(b.level);
        Ok((self.drop_to_level(a, level)?, self.drop_to_level(b, level)?))
    }
}

/// Assembles a vector from backend-produced chunks. Intended for backends
/// overriding provided methods.
pub fn assemble<C>(chunks: Vec<C>, logical_length: usize, level: usize) -> CiphertextVector<C> {
    CiphertextVector {
        chunks,
        logical_length,
        level,
    }
}

pub(crate) fn require_level(available: usize, required: usize) -> Result<()> {
    if available < required {
        Err(HeError::LevelExhausted {
            required,
            available,
        })
    } else {
        Ok(())
    }
}

pub(crate) fn check_same_shape<C>(a: &CiphertextVector<C>, b: &CiphertextVector<C>) -> Result<()> {
    if a.logical_length != b.logical_length || a.chunks.len() != b.chunks.len() {
        return Err(HeError::LengthMismatch {
            left: a.logical_length,
            right: b.logical_length,
        });
    }
    if a.level != b.level {
        return Err(HeError::LevelMismatch {
            left: a.level,
            right: b.level,
        });
    }
    Ok(())
}

fn zip_chunks<C, F>(
    a: &CiphertextVector<C>,
    b: &CiphertextVector<C>,
    level: usize,
    f: F,
) -> Result<CiphertextVector<C>>
where
    F: Fn(&C, &C) -> Result<C>,
{
    let chunks = a
        .chunks
        .iter()
        .zip(&b.chunks)
        .map(|(x, y)| f(x, y))
        .collect::<Result<_>>()?;
    Ok(CiphertextVector {
        chunks,
        logical_length: a.logical_length,
        level,
    })
}
