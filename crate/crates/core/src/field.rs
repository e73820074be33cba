//! Arithmetic in the prime field `Z_p` for a 64-bit prime `p`.
//!
//! Elements are plain `u64` residues in `[0, p)`. All operations are total on
//! valid residues; wide products go through `u128`.

use thiserror::Error;

/// The Mersenne prime `2^61 - 1`, the default modulus.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("modulus {0} is not an odd prime")]
    NotPrime(u64),
    #[error("value {value} is not a residue modulo {modulus}")]
    OutOfRange { value: u64, modulus: u64 },
}

/// The field `Z_p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeField {
    p: u64,
}

impl PrimeField {
    /// Builds `Z_p`, rejecting anything that is not an odd prime.
    pub fn new(p: u64) -> Result<Self, FieldError> {
        if p < 3 || !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }
        Ok(Self { p })
    }

    pub fn mersenne61() -> Self {
        Self { p: MERSENNE_61 }
    }

    #[inline]
    pub fn modulus(&self) -> u64 {
        self.p
    }

    /// Largest non-negative centered representative, `(p - 1) / 2`.
    #[inline]
    pub fn half(&self) -> u64 {
        (self.p - 1) / 2
    }

    #[inline]
    pub fn contains(&self, e: u64) -> bool {
        e < self.p
    }

    pub fn check(&self, e: u64) -> Result<u64, FieldError> {
        if e < self.p {
            Ok(e)
        } else {
            Err(FieldError::OutOfRange {
                value: e,
                modulus: self.p,
            })
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let (s, carry) = a.overflowing_add(b);
        if carry || s >= self.p {
            s.wrapping_sub(self.p)
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            self.p - (b - a)
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        ((a as u128 * b as u128) % self.p as u128) as u64
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.p;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via Fermat; `None` for zero.
    pub fn inv(&self, a: u64) -> Option<u64> {
        if a.is_multiple_of(self.p) {
            None
        } else {
            Some(self.pow(a, self.p - 2))
        }
    }

    /// Reduces an arbitrary signed integer into `[0, p)`.
    #[inline]
    pub fn from_i128(&self, v: i128) -> u64 {
        v.rem_euclid(self.p as i128) as u64
    }

    #[inline]
    pub fn from_i64(&self, v: i64) -> u64 {
        self.from_i128(v as i128)
    }

    /// The unique integer in `[-(p-1)/2, (p-1)/2]` congruent to `e`.
    #[inline]
    pub fn lift(&self, e: u64) -> i64 {
        if e <= self.half() {
            e as i64
        } else {
            -((self.p - e) as i64)
        }
    }

    /// Inner product `Σ a[k]·b[k] mod p`.
    pub fn dot(&self, a: &[u64], b: &[u64]) -> u64 {
        debug_assert_eq!(a.len(), b.len());
        // Each reduced product is < 2^64, so a u128 accumulator absorbs 2^64 terms.
        let p = self.p as u128;
        let acc: u128 = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| (x as u128 * y as u128) % p)
            .sum();
        (acc % p) as u64
    }
}

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin for all 64-bit integers.
///
/// The first twelve primes as witnesses are sufficient below `3.3 * 10^24`.
pub fn is_prime(n: u64) -> bool {
    const WITNESSES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &w in &WITNESSES {
        if n == w {
            return true;
        }
        if n.is_multiple_of(w) {
            return false;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in &WITNESSES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_field_examples() {
        let f = PrimeField::new(101).unwrap();
        assert_eq!(f.add(70, 40), 9);
        assert_eq!(f.sub(3, 5), 99);
        assert_eq!(f.neg(0), 0);
        assert_eq!(f.inv(0), None);
        assert_eq!(f.mul(f.inv(7).unwrap(), 7), 1);
    }

    #[test]
    fn mersenne_square_of_minus_one() {
        let f = PrimeField::mersenne61();
        let m1 = f.modulus() - 1;
        // (p-1)^2 = p^2 - 2p + 1 ≡ 1, checked on the wide-integer side as well.
        let wide = (m1 as u128 * m1 as u128) % (MERSENNE_61 as u128);
        assert_eq!(wide, 1);
        assert_eq!(f.mul(m1, m1), 1);
    }

    #[test]
    fn rejects_composites_and_even() {
        for n in [0u64, 1, 2, 4, 9, 561, 1105, 3_215_031_751, (1 << 61) + 1] {
            assert!(PrimeField::new(n).is_err(), "{n}");
        }
        for n in [3u64, 101, 257, 65537, MERSENNE_61, 18_446_744_073_709_551_557] {
            assert!(PrimeField::new(n).is_ok(), "{n}");
        }
    }

    #[test]
    fn primality_matches_trial_division() {
        fn trial(n: u64) -> bool {
            n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
        }
        for n in 0..5000u64 {
            assert_eq!(is_prime(n), trial(n), "{n}");
        }
    }

    #[test]
    fn lift_boundaries() {
        let f = PrimeField::new(101).unwrap();
        assert_eq!(f.lift(50), 50);
        assert_eq!(f.lift(51), -50);
        assert_eq!(f.lift(100), -1);
        for e in 0..101 {
            assert_eq!(f.from_i64(f.lift(e)), e);
        }
    }

    #[test]
    fn largest_prime_does_not_overflow() {
        let f = PrimeField::new(18_446_744_073_709_551_557).unwrap();
        let a = f.modulus() - 1;
        assert_eq!(f.add(a, a), f.modulus() - 2);
        assert_eq!(f.dot(&[a; 4], &[a; 4]), 4);
    }

    proptest! {
        #[test]
        fn ops_agree_with_wide_oracle(a in 0u64..MERSENNE_61, b in 0u64..MERSENNE_61) {
            let f = PrimeField::mersenne61();
            let p = MERSENNE_61 as i128;
            prop_assert_eq!(f.add(a, b) as i128, (a as i128 + b as i128).rem_euclid(p));
            prop_assert_eq!(f.sub(a, b) as i128, (a as i128 - b as i128).rem_euclid(p));
            prop_assert_eq!(f.mul(a, b) as i128, (a as i128 * b as i128).rem_euclid(p));
        }

        #[test]
        fn lift_round_trips(e in 0u64..MERSENNE_61) {
            let f = PrimeField::mersenne61();
            let l = f.lift(e);
            prop_assert!(l.unsigned_abs() <= f.half());
            prop_assert_eq!(f.from_i64(l), e);
        }
    }
}
