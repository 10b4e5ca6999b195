//! Arithmetic in the binary extension fields GF(2^n) for 1 ≤ n ≤ 16.
//!
//! Elements are n-bit values; bit i is the coefficient of Z^i. Addition is
//! XOR, multiplication is carry-less polynomial multiplication reduced by a
//! fixed irreducible modulus, and inversion is exponentiation by 2^n - 2.
//!
//! One modulus per degree is pinned in [`IRREDUCIBLE`] (the irreducible
//! polynomial of each degree with the smallest integer representation), so
//! every result is reproducible bit for bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported field degree.
pub const MAX_DEGREE: u32 = 16;

/// Irreducible modulus for GF(2^n), indexed by n - 1. Entry n-1 is the
/// degree-n irreducible polynomial with the smallest integer encoding.
pub const IRREDUCIBLE: [u32; MAX_DEGREE as usize] = [
    0x2, 0x7, 0xb, 0x13, 0x25, 0x43, 0x83, 0x11b, 0x203, 0x409, 0x805, 0x1009, 0x201b, 0x4021,
    0x8003, 0x1002b,
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GfError {
    #[error("field degree {0} out of range 1..={MAX_DEGREE}")]
    DegreeOutOfRange(u32),
    #[error("element value {value:#x} does not fit in GF(2^{degree})")]
    ValueTooLarge { value: u32, degree: u32 },
    #[error("operands live in different fields: GF(2^{0}) vs GF(2^{1})")]
    DegreeMismatch(u32, u32),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
}

/// An element of GF(2^n).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldElement {
    value: u32,
    degree: u32,
}

impl FieldElement {
    pub fn new(value: u32, degree: u32) -> Result<Self, GfError> {
        if degree == 0 || degree > MAX_DEGREE {
            return Err(GfError::DegreeOutOfRange(degree));
        }
        if value >> degree != 0 {
            return Err(GfError::ValueTooLarge { value, degree });
        }
        Ok(Self { value, degree })
    }

    pub fn zero(degree: u32) -> Self {
        Self::new(0, degree).expect("degree checked by caller")
    }

    pub fn one(degree: u32) -> Self {
        Self::new(1, degree).expect("degree checked by caller")
    }

    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    fn check_same_field(&self, other: &Self) -> Result<(), GfError> {
        if self.degree != other.degree {
            return Err(GfError::DegreeMismatch(self.degree, other.degree));
        }
        Ok(())
    }
}

/// Field addition: bitwise XOR.
pub fn gf_add(a: FieldElement, b: FieldElement) -> Result<FieldElement, GfError> {
    a.check_same_field(&b)?;
    Ok(FieldElement {
        value: a.value ^ b.value,
        degree: a.degree,
    })
}

/// Field multiplication: shift-and-XOR product reduced by the pinned modulus.
pub fn gf_mul(a: FieldElement, b: FieldElement) -> Result<FieldElement, GfError> {
    a.check_same_field(&b)?;
    let n = a.degree;
    let modulus = IRREDUCIBLE[(n - 1) as usize] as u64;
    let mut acc: u64 = 0;
    let mut x = a.value as u64;
    let mut y = b.value as u64;
    while y != 0 {
        if y & 1 != 0 {
            acc ^= x;
        }
        y >>= 1;
        x <<= 1;
    }
    // Reduce the (at most 2n-1 bit) product.
    for bit in (n..2 * n).rev() {
        if acc >> bit & 1 != 0 {
            acc ^= modulus << (bit - n);
        }
    }
    Ok(FieldElement {
        value: acc as u32,
        degree: n,
    })
}

/// Multiplicative inverse via a^(2^n - 2).
pub fn gf_inv(a: FieldElement) -> Result<FieldElement, GfError> {
    if a.is_zero() {
        return Err(GfError::ZeroInverse);
    }
    let n = a.degree;
    let mut exp: u64 = (1u64 << n) - 2;
    let mut base = a;
    let mut acc = FieldElement::one(n);
    while exp != 0 {
        if exp & 1 != 0 {
            acc = gf_mul(acc, base)?;
        }
        base = gf_mul(base, base)?;
        exp >>= 1;
    }
    Ok(acc)
}
