//! Leveled RNS-CKKS over Z[X]/(X^n + 1).
//!
//! The modulus chain is q_0 (first modulus) followed by `depth` primes next
//! to the scaling factor, plus one special prime P used only inside key
//! switching. A ciphertext at level l lives modulo q_0·…·q_l and is kept in
//! NTT form. Key switching uses one digit per chain prime with the special
//! prime absorbing the digit growth.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::arith::{ntt_primes, Modulus};
use crate::backend::{require_level, ChunkPlaintext, HeBackend, KeyMaterial};
use crate::encoding::SlotEncoder;
use crate::error::{HeError, Result};
use crate::ntt::{automorphism_map, NttTable};
use crate::params::HeParams;

const ERROR_STD: f64 = 3.2;
const ERROR_BOUND: f64 = 6.0 * ERROR_STD;

/// Residues of one polynomial, `residues[k]` modulo prime k, NTT form.
type Rns = Vec<Vec<u64>>;

#[derive(Clone, Debug)]
pub struct CkksCiphertext {
    c0: Rns,
    c1: Rns,
    scale: f64,
}

impl CkksCiphertext {
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn level(&self) -> usize {
        self.c0.len() - 1
    }
}

#[derive(Clone, Debug)]
pub struct CkksPublicKey {
    b: Rns,
    a: Rns,
}

pub struct CkksSecretKey {
    /// Over every chain prime and the special prime.
    s: Rns,
}

impl std::fmt::Debug for CkksSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("CkksSecretKey(..)")
    }
}

/// Switches a ciphertext component from some s' to s. One (b, a) pair per
/// chain prime, each over all primes including the special one.
#[derive(Clone, Debug)]
struct SwitchingKey {
    digits: Vec<(Rns, Rns)>,
}

#[derive(Clone, Debug)]
pub struct CkksEvaluationKey {
    relinearization: SwitchingKey,
    /// Keyed by left-rotation step.
    rotations: BTreeMap<usize, SwitchingKey>,
}

impl CkksEvaluationKey {
    pub fn rotation_steps(&self) -> impl Iterator<Item = usize> + '_ {
        self.rotations.keys().copied()
    }
}

#[derive(Debug)]
struct Context {
    params: HeParams,
    n: usize,
    /// q_0..q_L then P.
    moduli: Vec<Modulus>,
    tables: Vec<NttTable>,
    encoder: SlotEncoder,
    rotation_maps: BTreeMap<usize, Vec<usize>>,
    /// rescale_inv[l][k] = q_l^{-1} mod q_k for k < l.
    rescale_inv: Vec<Vec<(u64, u64)>>,
    /// P^{-1} mod q_k.
    special_inv: Vec<(u64, u64)>,
    /// P mod q_k.
    special_mod: Vec<u64>,
    q0_inv_mod_q1: u64,
}

impl Context {
    fn special(&self) -> usize {
        self.moduli.len() - 1
    }

    fn top_level(&self) -> usize {
        self.params.multiplicative_depth
    }

    fn sample_ternary<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        (0..self.n).map(|_| rng.random_range(-1i64..=1)).collect()
    }

    fn sample_error<R: RngCore + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        let normal = Normal::new(0.0, ERROR_STD).expect("fixed std");
        (0..self.n)
            .map(|_| {
                let x: f64 = normal.sample(rng);
                x.clamp(-ERROR_BOUND, ERROR_BOUND).round() as i64
            })
            .collect()
    }

    fn sample_uniform<R: RngCore + ?Sized>(&self, rng: &mut R, k: usize) -> Vec<u64> {
        let q = self.moduli[k].value();
        (0..self.n).map(|_| rng.random_range(0..q)).collect()
    }

    fn small_to_ntt(&self, coeffs: &[i64], primes: &[usize]) -> Rns {
        primes
            .iter()
            .map(|&k| {
                let m = &self.moduli[k];
                let mut r: Vec<u64> = coeffs.iter().map(|&c| m.reduce_i64(c)).collect();
                self.tables[k].forward(&mut r);
                r
            })
            .collect()
    }

    fn big_to_ntt(&self, coeffs: &[i128], level: usize) -> Rns {
        (0..=level)
            .map(|k| {
                let m = &self.moduli[k];
                let mut r: Vec<u64> = coeffs.iter().map(|&c| m.reduce_i128(c)).collect();
                self.tables[k].forward(&mut r);
                r
            })
            .collect()
    }

    fn encode(&self, slots: &[f64], scale: f64, level: usize) -> Rns {
        let coeffs: Vec<i128> = self
            .encoder
            .encode(slots)
            .into_iter()
            .map(|c| (c * scale).round() as i128)
            .collect();
        self.big_to_ntt(&coeffs, level)
    }

    fn all_primes(&self) -> Vec<usize> {
        (0..self.moduli.len()).collect()
    }

    fn mul_into(&self, acc: &mut [u64], a: &[u64], b: &[u64], k: usize) {
        let m = &self.moduli[k];
        for ((x, &y), &z) in acc.iter_mut().zip(a).zip(b) {
            *x = m.add(*x, m.mul(y, z));
        }
    }

    fn pointwise(&self, a: &[u64], b: &[u64], k: usize) -> Vec<u64> {
        let m = &self.moduli[k];
        a.iter().zip(b).map(|(&x, &y)| m.mul(x, y)).collect()
    }

    fn add_rns(&self, a: &Rns, b: &Rns) -> Rns {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(k, (x, y))| {
                let m = &self.moduli[k];
                x.iter().zip(y).map(|(&u, &v)| m.add(u, v)).collect()
            })
            .collect()
    }

    fn sub_rns(&self, a: &Rns, b: &Rns) -> Rns {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(k, (x, y))| {
                let m = &self.moduli[k];
                x.iter().zip(y).map(|(&u, &v)| m.sub(u, v)).collect()
            })
            .collect()
    }

    /// Divides by the prime at index `drop` with rounding, given residues for
    /// `keep` primes followed by the residue modulo the dropped prime.
    fn divide_and_round(&self, mut residues: Rns, drop: usize, inverses: &[(u64, u64)]) -> Rns {
        let mut last = residues.pop().expect("at least two residues");
        self.tables[drop].inverse(&mut last);
        let dropped = &self.moduli[drop];
        let centered: Vec<i64> = last.iter().map(|&x| dropped.center(x)).collect();
        for (k, r) in residues.iter_mut().enumerate() {
            let m = &self.moduli[k];
            let mut t: Vec<u64> = centered.iter().map(|&c| m.reduce_i64(c)).collect();
            self.tables[k].forward(&mut t);
            let (inv, inv_shoup) = inverses[k];
            for (x, y) in r.iter_mut().zip(&t) {
                *x = m.mul_shoup(m.sub(*x, *y), inv, inv_shoup);
            }
        }
        residues
    }

    fn rescale(&self, c: &CkksCiphertext) -> CkksCiphertext {
        let l = c.level();
        let inv = &self.rescale_inv[l];
        CkksCiphertext {
            c0: self.divide_and_round(c.c0.clone(), l, inv),
            c1: self.divide_and_round(c.c1.clone(), l, inv),
            scale: c.scale / self.moduli[l].value() as f64,
        }
    }

    /// Returns (u0, u1) modulo q_0..q_l with u0 + u1·s ≈ d·s'.
    fn key_switch(&self, d: &Rns, key: &SwitchingKey) -> (Rns, Rns) {
        let l = d.len() - 1;
        let special = self.special();
        let ext: Vec<usize> = (0..=l).chain(std::iter::once(special)).collect();
        let mut acc0: Rns = vec![vec![0u64; self.n]; ext.len()];
        let mut acc1: Rns = vec![vec![0u64; self.n]; ext.len()];
        for (j, dj) in d.iter().enumerate() {
            let mut coeffs = dj.clone();
            self.tables[j].inverse(&mut coeffs);
            let (kb, ka) = &key.digits[j];
            for (slot, &t) in ext.iter().enumerate() {
                let digit = if t == j {
                    dj.clone()
                } else {
                    let m = &self.moduli[t];
                    let mut r: Vec<u64> = coeffs.iter().map(|&x| m.reduce(x)).collect();
                    self.tables[t].forward(&mut r);
                    r
                };
                self.mul_into(&mut acc0[slot], &digit, &kb[t], t);
                self.mul_into(&mut acc1[slot], &digit, &ka[t], t);
            }
        }
        let inv = &self.special_inv;
        (
            self.divide_and_round(acc0, special, inv),
            self.divide_and_round(acc1, special, inv),
        )
    }

    fn make_switching_key<R: RngCore + ?Sized>(
        &self,
        s: &Rns,
        target: &Rns,
        rng: &mut R,
    ) -> SwitchingKey {
        let primes = self.all_primes();
        let digits = (0..=self.top_level())
            .map(|j| {
                let a: Rns = primes
                    .iter()
                    .map(|&k| self.sample_uniform(rng, k))
                    .collect();
                let e = self.small_to_ntt(&self.sample_error(rng), &primes);
                let b: Rns = primes
                    .iter()
                    .map(|&k| {
                        let m = &self.moduli[k];
                        let mut bk: Vec<u64> = a[k]
                            .iter()
                            .zip(&s[k])
                            .zip(&e[k])
                            .map(|((&ai, &si), &ei)| m.sub(ei, m.mul(ai, si)))
                            .collect();
                        if k == j {
                            let p = self.special_mod[j];
                            for (x, &t) in bk.iter_mut().zip(&target[k]) {
                                *x = m.add(*x, m.mul(p, t));
                            }
                        }
                        bk
                    })
                    .collect();
                (b, a)
            })
            .collect();
        SwitchingKey { digits }
    }

    fn permute(&self, poly: &Rns, map: &[usize]) -> Rns {
        poly.iter()
            .map(|r| map.iter().map(|&k| r[k]).collect())
            .collect()
    }

    fn rotate(&self, c: &CkksCiphertext, step: usize, key: &SwitchingKey) -> CkksCiphertext {
        let map = &self.rotation_maps[&step];
        let c0 = self.permute(&c.c0, map);
        let c1 = self.permute(&c.c1, map);
        let (u0, u1) = self.key_switch(&c1, key);
        CkksCiphertext {
            c0: self.add_rns(&c0, &u0),
            c1: u1,
            scale: c.scale,
        }
    }

    /// CRT over at most the first two primes; messages stay far below q_0·q_1.
    fn decode_coefficients(&self, poly: &Rns, scale: f64) -> Vec<f64> {
        let q0 = &self.moduli[0];
        let mut r0 = poly[0].clone();
        self.tables[0].inverse(&mut r0);
        if poly.len() == 1 {
            return r0.iter().map(|&x| q0.center(x) as f64 / scale).collect();
        }
        let q1 = &self.moduli[1];
        let mut r1 = poly[1].clone();
        self.tables[1].inverse(&mut r1);
        let big = q0.value() as u128 * q1.value() as u128;
        r0.iter()
            .zip(&r1)
            .map(|(&x0, &x1)| {
                let t = q1.mul(q1.sub(x1, q1.reduce(x0)), self.q0_inv_mod_q1);
                let x = x0 as u128 + q0.value() as u128 * t as u128;
                let signed = if x > big / 2 {
                    x as i128 - big as i128
                } else {
                    x as i128
                };
                signed as f64 / scale
            })
            .collect()
    }
}

/// Leveled CKKS backend. Cloning shares the precomputed context.
#[derive(Clone, Debug)]
pub struct CkksBackend {
    ctx: Arc<Context>,
}

impl CkksBackend {
    pub fn new(params: HeParams) -> Result<Self> {
        params.validate()?;
        let n = params.ring_dimension;
        let depth = params.multiplicative_depth;
        let first = ntt_primes(params.first_modulus_bits, n, 1, &[])[0];
        let scaling = ntt_primes(params.scaling_bits, n, depth, &[first]);
        let mut chain = vec![first];
        chain.extend(&scaling);
        let special = ntt_primes(params.special_modulus_bits, n, 1, &chain)[0];
        let mut values = chain.clone();
        values.push(special);
        let moduli: Vec<Modulus> = values.iter().map(|&q| Modulus::new(q)).collect();
        let tables = moduli.iter().map(|&m| NttTable::new(m, n)).collect();

        let slots = n / 2;
        let mut rotation_maps = BTreeMap::new();
        let mut step = 1;
        while step < slots {
            let g = pow_mod_usize(5, step, 2 * n);
            rotation_maps.insert(step, automorphism_map(n, g));
            step *= 2;
        }

        let rescale_inv = (0..=depth)
            .map(|l| {
                (0..l)
                    .map(|k| {
                        let m = &moduli[k];
                        let inv = m.inv(m.reduce(moduli[l].value()));
                        (inv, m.shoup(inv))
                    })
                    .collect()
            })
            .collect();
        let special_inv = (0..=depth)
            .map(|k| {
                let m = &moduli[k];
                let inv = m.inv(m.reduce(special));
                (inv, m.shoup(inv))
            })
            .collect();
        let special_mod = (0..=depth).map(|k| moduli[k].reduce(special)).collect();
        let q0_inv_mod_q1 = moduli[1].inv(moduli[1].reduce(first));

        Ok(Self {
            ctx: Arc::new(Context {
                params,
                n,
                moduli,
                tables,
                encoder: SlotEncoder::new(n),
                rotation_maps,
                rescale_inv,
                special_inv,
                special_mod,
                q0_inv_mod_q1,
            }),
        })
    }

    /// Chain primes q_0..q_L followed by the special prime.
    pub fn moduli(&self) -> Vec<u64> {
        self.ctx.moduli.iter().map(|m| m.value()).collect()
    }

    fn check_pair(&self, a: &CkksCiphertext, b: &CkksCiphertext) -> Result<()> {
        if a.level() != b.level() {
            return Err(HeError::LevelMismatch {
                left: a.level(),
                right: b.level(),
            });
        }
        if ((a.scale / b.scale) - 1.0).abs() > 1e-9 {
            return Err(HeError::ScaleMismatch {
                left: a.scale,
                right: b.scale,
            });
        }
        Ok(())
    }
}

fn pow_mod_usize(mut base: usize, mut exp: usize, modulus: usize) -> usize {
    let mut acc = 1usize;
    base %= modulus;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % modulus;
        }
        base = base * base % modulus;
        exp >>= 1;
    }
    acc
}

impl HeBackend for CkksBackend {
    type PublicKey = CkksPublicKey;
    type SecretKey = CkksSecretKey;
    type EvaluationKey = CkksEvaluationKey;
    type Chunk = CkksCiphertext;

    fn name(&self) -> &'static str {
        "ckks"
    }

    fn params(&self) -> &HeParams {
        &self.ctx.params
    }

    fn keygen(&self, seed: u64) -> KeyMaterial<Self> {
        let ctx = &*self.ctx;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let primes = ctx.all_primes();
        let s = ctx.small_to_ntt(&ctx.sample_ternary(&mut rng), &primes);

        let top: Vec<usize> = (0..=ctx.top_level()).collect();
        let a: Rns = top
            .iter()
            .map(|&k| ctx.sample_uniform(&mut rng, k))
            .collect();
        let e = ctx.small_to_ntt(&ctx.sample_error(&mut rng), &top);
        let b: Rns = top
            .iter()
            .map(|&k| {
                let m = &ctx.moduli[k];
                a[k].iter()
                    .zip(&s[k])
                    .zip(&e[k])
                    .map(|((&ai, &si), &ei)| m.sub(ei, m.mul(ai, si)))
                    .collect()
            })
            .collect();

        let s_squared: Rns = primes
            .iter()
            .map(|&k| ctx.pointwise(&s[k], &s[k], k))
            .collect();
        let relinearization = ctx.make_switching_key(&s, &s_squared, &mut rng);
        let rotations = ctx
            .rotation_maps
            .iter()
            .map(|(&step, map)| {
                let rotated = ctx.permute(&s, map);
                (step, ctx.make_switching_key(&s, &rotated, &mut rng))
            })
            .collect();

        KeyMaterial {
            public: CkksPublicKey { b, a },
            secret: CkksSecretKey { s },
            evaluation: CkksEvaluationKey {
                relinearization,
                rotations,
            },
        }
    }

    fn encrypt_chunk<R: RngCore + ?Sized>(
        &self,
        pk: &CkksPublicKey,
        slots: &[f64],
        rng: &mut R,
    ) -> CkksCiphertext {
        let ctx = &*self.ctx;
        let level = ctx.top_level();
        let scale = ctx.params.scale();
        let top: Vec<usize> = (0..=level).collect();
        let message = ctx.encode(slots, scale, level);
        let v = ctx.small_to_ntt(&ctx.sample_ternary(rng), &top);
        let e0 = ctx.small_to_ntt(&ctx.sample_error(rng), &top);
        let e1 = ctx.small_to_ntt(&ctx.sample_error(rng), &top);
        let mut c0 = Vec::with_capacity(level + 1);
        let mut c1 = Vec::with_capacity(level + 1);
        for k in top {
            let m = &ctx.moduli[k];
            c0.push(
                (0..ctx.n)
                    .map(|i| m.add(m.add(m.mul(v[k][i], pk.b[k][i]), e0[k][i]), message[k][i]))
                    .collect(),
            );
            c1.push(
                (0..ctx.n)
                    .map(|i| m.add(m.mul(v[k][i], pk.a[k][i]), e1[k][i]))
                    .collect(),
            );
        }
        CkksCiphertext { c0, c1, scale }
    }

    fn decrypt_chunk(&self, sk: &CkksSecretKey, chunk: &CkksCiphertext) -> Vec<f64> {
        let ctx = &*self.ctx;
        let keep = chunk.level().min(1);
        let poly: Rns = (0..=keep)
            .map(|k| {
                let m = &ctx.moduli[k];
                chunk.c0[k]
                    .iter()
                    .zip(&chunk.c1[k])
                    .zip(&sk.s[k])
                    .map(|((&x, &y), &s)| m.add(x, m.mul(y, s)))
                    .collect()
            })
            .collect();
        let coeffs = ctx.decode_coefficients(&poly, chunk.scale);
        ctx.encoder.decode(&coeffs)
    }

    fn add_chunk(&self, a: &CkksCiphertext, b: &CkksCiphertext) -> Result<CkksCiphertext> {
        self.check_pair(a, b)?;
        Ok(CkksCiphertext {
            c0: self.ctx.add_rns(&a.c0, &b.c0),
            c1: self.ctx.add_rns(&a.c1, &b.c1),
            scale: a.scale,
        })
    }

    fn sub_chunk(&self, a: &CkksCiphertext, b: &CkksCiphertext) -> Result<CkksCiphertext> {
        self.check_pair(a, b)?;
        Ok(CkksCiphertext {
            c0: self.ctx.sub_rns(&a.c0, &b.c0),
            c1: self.ctx.sub_rns(&a.c1, &b.c1),
            scale: a.scale,
        })
    }

    /// The plaintext is encoded at the scale of the prime being dropped, so
    /// the ciphertext scale survives the rescale unchanged.
    fn pmult_chunk(
        &self,
        plain: ChunkPlaintext<'_>,
        c: &CkksCiphertext,
        level: usize,
    ) -> Result<CkksCiphertext> {
        require_level(level, 1)?;
        let ctx = &*self.ctx;
        let l = c.level();
        let plain_scale = ctx.moduli[l].value() as f64;
        let product = match plain {
            ChunkPlaintext::Scalar(s) => {
                let k = (s * plain_scale).round() as i128;
                let scalar: Vec<u64> = (0..=l).map(|i| ctx.moduli[i].reduce_i128(k)).collect();
                let scale_poly = |p: &Rns| -> Rns {
                    p.iter()
                        .enumerate()
                        .map(|(i, r)| {
                            let m = &ctx.moduli[i];
                            let w = scalar[i];
                            let ws = m.shoup(w);
                            r.iter().map(|&x| m.mul_shoup(x, w, ws)).collect()
                        })
                        .collect()
                };
                CkksCiphertext {
                    c0: scale_poly(&c.c0),
                    c1: scale_poly(&c.c1),
                    scale: c.scale * plain_scale,
                }
            }
            ChunkPlaintext::Slots(values) => {
                let p = ctx.encode(values, plain_scale, l);
                let mul = |x: &Rns| -> Rns {
                    x.iter()
                        .zip(&p)
                        .enumerate()
                        .map(|(i, (r, q))| ctx.pointwise(r, q, i))
                        .collect()
                };
                CkksCiphertext {
                    c0: mul(&c.c0),
                    c1: mul(&c.c1),
                    scale: c.scale * plain_scale,
                }
            }
        };
        Ok(ctx.rescale(&product))
    }

    fn cmult_chunk(
        &self,
        ek: &CkksEvaluationKey,
        a: &CkksCiphertext,
        b: &CkksCiphertext,
        level: usize,
    ) -> Result<CkksCiphertext> {
        require_level(level, 1)?;
        if a.level() != b.level() {
            return Err(HeError::LevelMismatch {
                left: a.level(),
                right: b.level(),
            });
        }
        let ctx = &*self.ctx;
        let l = a.level();
        let mut d0 = Vec::with_capacity(l + 1);
        let mut d1 = Vec::with_capacity(l + 1);
        let mut d2 = Vec::with_capacity(l + 1);
        for k in 0..=l {
            let m = &ctx.moduli[k];
            d0.push(ctx.pointwise(&a.c0[k], &b.c0[k], k));
            d1.push(
                (0..ctx.n)
                    .map(|i| m.add(m.mul(a.c0[k][i], b.c1[k][i]), m.mul(a.c1[k][i], b.c0[k][i])))
                    .collect(),
            );
            d2.push(ctx.pointwise(&a.c1[k], &b.c1[k], k));
        }
        let (u0, u1) = ctx.key_switch(&d2, &ek.relinearization);
        let product = CkksCiphertext {
            c0: ctx.add_rns(&d0, &u0),
            c1: ctx.add_rns(&d1, &u1),
            scale: a.scale * b.scale,
        };
        Ok(ctx.rescale(&product))
    }

    fn sum_slots_chunk(
        &self,
        ek: &CkksEvaluationKey,
        c: &CkksCiphertext,
        _level: usize,
    ) -> Result<CkksCiphertext> {
        let ctx = &*self.ctx;
        let mut acc = c.clone();
        for (&step, key) in &ek.rotations {
            let rotated = ctx.rotate(&acc, step, key);
            acc = self.add_chunk(&acc, &rotated)?;
        }
        Ok(acc)
    }

    fn drop_chunk(&self, c: &CkksCiphertext, from: usize, to: usize) -> Result<CkksCiphertext> {
        debug_assert_eq!(from, c.level());
        if to > from {
            return Err(HeError::LevelRaise { from, to });
        }
        Ok(CkksCiphertext {
            c0: c.c0[..=to].to_vec(),
            c1: c.c1[..=to].to_vec(),
            scale: c.scale,
        })
    }
}

impl CkksBackend {
    /// Left rotation of the slot vector by `step`, a power of two below the slot count.
    pub fn rotate(
        &self,
        ek: &CkksEvaluationKey,
        c: &CkksCiphertext,
        step: usize,
    ) -> Option<CkksCiphertext> {
        ek.rotations
            .get(&step)
            .map(|key| self.ctx.rotate(c, step, key))
    }
}
