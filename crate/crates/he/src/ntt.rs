//! Negacyclic number-theoretic transform over Z_q[X]/(X^n + 1).
//!
//! Forward output is in bit-reversed order: position `k` holds the
//! evaluation at psi^(2·brv(k) + 1), where psi is a primitive 2n-th root.

use crate::arith::{primitive_root_2n, Modulus};

#[derive(Clone, Debug)]
pub struct NttTable {
    modulus: Modulus,
    n: usize,
    roots: Vec<u64>,
    roots_shoup: Vec<u64>,
    inv_roots: Vec<u64>,
    inv_roots_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

pub(crate) fn bit_reverse(x: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - bits)
    }
}

impl NttTable {
    pub fn new(modulus: Modulus, n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 2);
        let bits = n.trailing_zeros();
        let psi = primitive_root_2n(&modulus, n);
        let psi_inv = modulus.inv(psi);
        let mut roots = vec![0u64; n];
        let mut inv_roots = vec![0u64; n];
        let (mut p, mut pi) = (1u64, 1u64);
        for i in 0..n {
            let r = bit_reverse(i, bits);
            roots[r] = p;
            inv_roots[r] = pi;
            p = modulus.mul(p, psi);
            pi = modulus.mul(pi, psi_inv);
        }
        let roots_shoup = roots.iter().map(|&w| modulus.shoup(w)).collect();
        let inv_roots_shoup = inv_roots.iter().map(|&w| modulus.shoup(w)).collect();
        let n_inv = modulus.inv(n as u64);
        Self {
            modulus,
            n,
            roots,
            roots_shoup,
            inv_roots,
            inv_roots_shoup,
            n_inv,
            n_inv_shoup: modulus.shoup(n_inv),
        }
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m_ = &self.modulus;
        let n = self.n;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t >>= 1;
            for i in 0..m {
                let j1 = 2 * i * t;
                let w = self.roots[m + i];
                let ws = self.roots_shoup[m + i];
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = m_.mul_shoup(*y, w, ws);
                    *x = m_.add(u, v);
                    *y = m_.sub(u, v);
                }
            }
            m <<= 1;
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let m_ = &self.modulus;
        let mut t = 1;
        let mut m = self.n;
        while m > 1 {
            let h = m >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let w = self.inv_roots[h + i];
                let ws = self.inv_roots_shoup[h + i];
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    *x = m_.add(u, v);
                    *y = m_.mul_shoup(m_.sub(u, v), w, ws);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = m_.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }

    /// Odd exponent e with forward-output position `k` equal to a(psi^e).
    pub fn evaluation_exponent(&self, k: usize) -> usize {
        2 * bit_reverse(k, self.n.trailing_zeros()) + 1
    }
}

/// Index map realising X -> X^g directly on forward-transformed vectors:
/// `out[k] = in[map[k]]`. Independent of the modulus.
pub fn automorphism_map(n: usize, galois: usize) -> Vec<usize> {
    let bits = n.trailing_zeros();
    let two_n = 2 * n;
    let mut position_of = vec![0usize; two_n];
    for k in 0..n {
        position_of[2 * bit_reverse(k, bits) + 1] = k;
    }
    (0..n)
        .map(|k| {
            let e = 2 * bit_reverse(k, bits) + 1;
            position_of[(e * galois) % two_n]
        })
        .collect()
}
