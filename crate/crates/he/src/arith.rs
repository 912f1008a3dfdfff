//! Word-sized modular arithmetic and NTT-friendly prime search.

/// A prime modulus below 2^62 with precomputed Barrett constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    ratio_lo: u64,
    ratio_hi: u64,
}

impl Modulus {
    pub fn new(value: u64) -> Self {
        assert!(value > 1 && value < (1 << 62), "modulus out of range");
        let ratio = u128::MAX / value as u128;
        Self {
            value,
            ratio_lo: ratio as u64,
            ratio_hi: (ratio >> 64) as u64,
        }
    }

    #[inline(always)]
    pub fn value(&self) -> u64 {
        self.value
    }

    /// Reduces a 128-bit integer with a floor(2^128 / q) Barrett estimate.
    #[inline(always)]
    pub fn reduce_u128(&self, z: u128) -> u64 {
        let z0 = z as u64;
        let z1 = (z >> 64) as u64;
        let carry = ((z0 as u128 * self.ratio_lo as u128) >> 64) as u64;
        let t = z0 as u128 * self.ratio_hi as u128;
        let (mid, c1) = (t as u64).overflowing_add(carry);
        let hi = ((t >> 64) as u64) + c1 as u64;
        let t = z1 as u128 * self.ratio_lo as u128;
        let (_, c2) = mid.overflowing_add(t as u64);
        let carry = ((t >> 64) as u64) + c2 as u64;
        let quotient = z1
            .wrapping_mul(self.ratio_hi)
            .wrapping_add(hi)
            .wrapping_add(carry);
        let r = z0.wrapping_sub(quotient.wrapping_mul(self.value));
        r.min(r.wrapping_sub(self.value))
    }

    #[inline(always)]
    pub fn reduce(&self, x: u64) -> u64 {
        if x >= self.value {
            self.reduce_u128(x as u128)
        } else {
            x
        }
    }

    /// Maps a signed integer into [0, q).
    #[inline(always)]
    pub fn reduce_i64(&self, x: i64) -> u64 {
        if x >= 0 {
            self.reduce(x as u64)
        } else {
            self.neg(self.reduce(x.unsigned_abs()))
        }
    }

    #[inline(always)]
    pub fn reduce_i128(&self, x: i128) -> u64 {
        if x >= 0 {
            self.reduce_u128(x as u128)
        } else {
            self.neg(self.reduce_u128(x.unsigned_abs()))
        }
    }

    #[inline(always)]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        s.min(s.wrapping_sub(self.value))
    }

    #[inline(always)]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        let d = a.wrapping_sub(b);
        d.min(d.wrapping_add(self.value))
    }

    #[inline(always)]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline(always)]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// Shoup precomputation floor(w * 2^64 / q) for a fixed multiplicand w.
    #[inline(always)]
    pub fn shoup(&self, w: u64) -> u64 {
        (((w as u128) << 64) / self.value as u128) as u64
    }

    /// a * w mod q given the Shoup constant of w.
    #[inline(always)]
    pub fn mul_shoup(&self, a: u64, w: u64, w_shoup: u64) -> u64 {
        let q = ((a as u128 * w_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(w).wrapping_sub(q.wrapping_mul(self.value));
        r.min(r.wrapping_sub(self.value))
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse via Fermat; the modulus is prime.
    pub fn inv(&self, a: u64) -> u64 {
        let a = self.reduce(a);
        assert!(a != 0, "zero has no inverse");
        self.pow(a, self.value - 2)
    }

    /// Centered representative in (-q/2, q/2].
    #[inline(always)]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }
}

fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod_u64(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n.is_multiple_of(p) {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d.is_multiple_of(2) {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &BASES {
        let mut x = pow_mod_u64(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Returns `count` distinct primes p ≡ 1 (mod 2n), searching outward from
/// 2^bits so they stay as close as possible to the target size. Primes in
/// `exclude` are skipped.
pub fn ntt_primes(bits: u32, ring_dimension: usize, count: usize, exclude: &[u64]) -> Vec<u64> {
    assert!((20..=61).contains(&bits), "prime size out of range");
    let step = 2 * ring_dimension as u64;
    let target = 1u64 << bits;
    let mut found = Vec::with_capacity(count);
    let mut below = target + 1 - step;
    let mut above = target + 1;
    // Alternate below/above so the product of the chosen primes stays near target^count.
    let mut prefer_below = true;
    while found.len() < count {
        let candidate = if prefer_below {
            let c = below;
            below -= step;
            c
        } else {
            let c = above;
            above += step;
            c
        };
        if above >= (1 << 62) {
            prefer_below = true;
        } else {
            prefer_below = !prefer_below;
        }
        if is_prime(candidate) && !exclude.contains(&candidate) && !found.contains(&candidate) {
            found.push(candidate);
        }
    }
    found
}

/// A generator of the order-2n subgroup, i.e. a primitive 2n-th root of unity.
pub fn primitive_root_2n(modulus: &Modulus, ring_dimension: usize) -> u64 {
    let q = modulus.value();
    let order = 2 * ring_dimension as u64;
    assert_eq!((q - 1) % order, 0, "q is not NTT-friendly for this ring");
    let cofactor = (q - 1) / order;
    let mut g = 2u64;
    loop {
        let candidate = modulus.pow(g, cofactor);
        // candidate^(order/2) == -1 means its order is exactly `order`.
        if modulus.pow(candidate, order / 2) == q - 1 {
            return candidate;
        }
        g += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q() -> u64 {
        ntt_primes(60, 1 << 14, 1, &[])[0]
    }

    #[test]
    fn known_primes() {
        assert!(is_prime(2));
        assert!(is_prime(998_244_353));
        assert!(!is_prime(1));
        assert!(!is_prime(561));
        assert!(!is_prime(3_215_031_751));
    }

    #[test]
    fn ntt_primes_are_congruent() {
        let primes = ntt_primes(50, 1 << 14, 3, &[]);
        for p in primes {
            assert!(is_prime(p));
            assert_eq!(p % (1 << 15), 1);
            assert_eq!(64 - p.leading_zeros(), 50 + (p > (1 << 50)) as u32);
        }
    }

    #[test]
    fn root_has_exact_order() {
        let q = ntt_primes(40, 16, 1, &[])[0];
        let m = Modulus::new(q);
        let psi = primitive_root_2n(&m, 16);
        assert_eq!(m.pow(psi, 32), 1);
        assert_eq!(m.pow(psi, 16), q - 1);
    }

    proptest! {
        #[test]
        fn barrett_matches_native(a in any::<u64>(), b in any::<u64>()) {
            let (q, m) = (q(), Modulus::new(q()));
            let (a, b) = (a % q, b % q);
            prop_assert_eq!(m.mul(a, b), mul_mod_u64(a, b, q));
            prop_assert_eq!(m.reduce_u128(a as u128 * b as u128 * 7), ((a as u128 * b as u128 * 7) % q as u128) as u64);
            prop_assert_eq!(m.reduce_i64(-(a as i64)), (-(a as i128)).rem_euclid(q as i128) as u64);
            prop_assert_eq!(m.reduce_i128(-(a as i128) * b as i128), (-(a as i128) * b as i128).rem_euclid(q as i128) as u64);
        }

        #[test]
        fn shoup_matches_native(a in any::<u64>(), w in any::<u64>()) {
            let (q, m) = (q(), Modulus::new(q()));
            let (a, w) = (a % q, w % q);
            prop_assert_eq!(m.mul_shoup(a, w, m.shoup(w)), mul_mod_u64(a, w, q));
        }

        #[test]
        fn inverse_roundtrip(a in 1u64..(1u64 << 59)) {
            let m = Modulus::new(q());
            prop_assert_eq!(m.mul(a, m.inv(a)), 1);
        }
    }
}
