//! Fixed-point encoding of reals into `Z_p`.
//!
//! A real `x` is represented by `round(x · 2^f) mod p`, read back through the
//! centered lift. The codec is built against a maximum layer width so that a
//! full dot product of in-bound values never wraps around the modulus:
//! `d_max · (B · 2^f)^2 < (p - 1) / 2`.

use thiserror::Error;

use crate::field::PrimeField;

pub const DEFAULT_FRAC_BITS: u32 = 16;
pub const DEFAULT_VALUE_BOUND: f64 = 4096.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("overflow budget violated: width {max_width} x (bound {value_bound} * 2^{frac_bits})^2 must stay below (p-1)/2 for p = {modulus}")]
    Budget {
        modulus: u64,
        frac_bits: u32,
        value_bound: f64,
        max_width: usize,
    },
    #[error("value {value} exceeds the encodable bound {bound}")]
    OutOfBound { value: f64, bound: f64 },
    #[error("value is not finite")]
    NonFinite,
    #[error("fraction bits {0} too large")]
    FracBits(u32),
    #[error("product {lift} outside the overflow budget {budget}")]
    ProductOverflow { lift: i64, budget: u128 },
}

/// Real ↔ field encoder with a global scale `2^f` and magnitude bound `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointCodec {
    field: PrimeField,
    frac_bits: u32,
    value_bound: f64,
    max_width: usize,
}

impl FixedPointCodec {
    pub fn new(
        field: PrimeField,
        frac_bits: u32,
        value_bound: f64,
        max_width: usize,
    ) -> Result<Self, CodecError> {
        if frac_bits > 40 {
            return Err(CodecError::FracBits(frac_bits));
        }
        if !value_bound.is_finite() || value_bound <= 0.0 {
            return Err(CodecError::NonFinite);
        }
        let codec = Self {
            field,
            frac_bits,
            value_bound,
            max_width: max_width.max(1),
        };
        if !codec.budget_holds() {
            return Err(CodecError::Budget {
                modulus: field.modulus(),
                frac_bits,
                value_bound,
                max_width,
            });
        }
        Ok(codec)
    }

    /// Picks the largest power-of-two bound, capped at the default `2^12`,
    /// that satisfies the overflow budget for `max_width`.
    pub fn auto_bound(field: PrimeField, frac_bits: u32, max_width: usize) -> Result<Self, CodecError> {
        let mut bound = DEFAULT_VALUE_BOUND;
        while bound >= 1.0 {
            if let Ok(c) = Self::new(field, frac_bits, bound, max_width) {
                return Ok(c);
            }
            bound /= 2.0;
        }
        Err(CodecError::Budget {
            modulus: field.modulus(),
            frac_bits,
            value_bound: 1.0,
            max_width,
        })
    }

    fn budget_holds(&self) -> bool {
        self.product_budget()
            .is_some_and(|b| b < self.field.half() as u128)
    }

    /// `d_max · ceil(B · 2^f)^2`, the largest product-scale magnitude a layer can reach.
    fn product_budget(&self) -> Option<u128> {
        let scaled = libm::ceil(self.value_bound * self.scale_f64());
        if scaled >= u64::MAX as f64 {
            return None;
        }
        let s = scaled as u128;
        s.checked_mul(s)?.checked_mul(self.max_width as u128)
    }

    #[inline]
    pub fn field(&self) -> &PrimeField {
        &self.field
    }

    #[inline]
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    #[inline]
    pub fn value_bound(&self) -> f64 {
        self.value_bound
    }

    #[inline]
    pub fn max_width(&self) -> usize {
        self.max_width
    }

    #[inline]
    pub fn scale(&self) -> u64 {
        1u64 << self.frac_bits
    }

    #[inline]
    fn scale_f64(&self) -> f64 {
        self.scale() as f64
    }

    /// `round(x · 2^f) mod p`, rounding half away from zero; rejects `|x| > B`.
    pub fn encode(&self, x: f64) -> Result<u64, CodecError> {
        if !x.is_finite() {
            return Err(CodecError::NonFinite);
        }
        if libm::fabs(x) > self.value_bound {
            return Err(CodecError::OutOfBound {
                value: x,
                bound: self.value_bound,
            });
        }
        self.encode_wrapping(x)
    }

    /// Encoding without the magnitude bound. Used for split weight parts whose
    /// individual entries may exceed `B` while their field sum does not.
    pub fn encode_wrapping(&self, x: f64) -> Result<u64, CodecError> {
        if !x.is_finite() {
            return Err(CodecError::NonFinite);
        }
        let v = libm::round(x * self.scale_f64());
        if libm::fabs(v) >= 9.0e18 {
            return Err(CodecError::OutOfBound {
                value: x,
                bound: self.value_bound,
            });
        }
        Ok(self.field.from_i64(v as i64))
    }

    pub fn decode(&self, e: u64) -> f64 {
        self.field.lift(e) as f64 / self.scale_f64()
    }

    /// Decodes a value carrying scale `2^(2f)`.
    pub fn decode_product(&self, e: u64) -> f64 {
        let s = self.scale_f64();
        self.field.lift(e) as f64 / (s * s)
    }

    /// Brings a product-scale residue (`2^(2f)`) back to scale `2^f`,
    /// rounding half away from zero on the centered lift. Total on `Z_p`.
    pub fn rescale(&self, e: u64) -> u64 {
        if self.frac_bits == 0 {
            return e;
        }
        let l = self.field.lift(e);
        let half = 1u64 << (self.frac_bits - 1);
        let q = (l.unsigned_abs() + half) >> self.frac_bits;
        let q = q as i64;
        self.field.from_i64(if l < 0 { -q } else { q })
    }

    /// [`rescale`](Self::rescale) that first checks the lift against the overflow budget.
    pub fn rescale_after_product(&self, e: u64) -> Result<u64, CodecError> {
        let lift = self.field.lift(e);
        let budget = self.product_budget().unwrap_or(u128::MAX);
        if lift.unsigned_abs() as u128 > budget {
            return Err(CodecError::ProductOverflow { lift, budget });
        }
        Ok(self.rescale(e))
    }

    /// Whether `e` decodes to a value within `[-B, B]`.
    pub fn in_bound(&self, e: u64) -> bool {
        let limit = libm::floor(self.value_bound * self.scale_f64()) as u64;
        self.field.lift(e).unsigned_abs() <= limit
    }
}
