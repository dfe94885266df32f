//! Arithmetic in GF(2^8) over the primitive polynomial x^8 + x^4 + x^3 + x^2 + 1.
//!
//! Multiplication and division go through precomputed log/antilog tables built
//! at compile time. The generator element is `2` (the polynomial `x`).

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

/// The field's reduction polynomial, including the x^8 term.
pub const PRIMITIVE_POLY: u16 = 0x11d;

const fn build_tables() -> ([u8; 512], [u8; 256]) {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= PRIMITIVE_POLY;
        }
        i += 1;
    }
    // Doubled so that exp[log a + log b] never needs a modulo.
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    (exp, log)
}

const TABLES: ([u8; 512], [u8; 256]) = build_tables();
static EXP: [u8; 512] = TABLES.0;
static LOG: [u8; 256] = TABLES.1;

/// An element of GF(2^8).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Gf(pub u8);

impl Gf {
    pub const ZERO: Gf = Gf(0);
    pub const ONE: Gf = Gf(1);

    /// `alpha^power` for the generator alpha = 2.
    pub fn exp(power: usize) -> Gf {
        Gf(EXP[power % 255])
    }

    /// Discrete log base alpha; `None` for zero.
    pub fn log(self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            Some(LOG[self.0 as usize] as usize)
        }
    }

    pub fn inverse(self) -> Option<Gf> {
        self.log().map(|l| Gf(EXP[255 - l]))
    }

    pub fn pow(self, n: usize) -> Gf {
        match self.log() {
            None if n == 0 => Gf::ONE,
            None => Gf::ZERO,
            Some(l) => Gf(EXP[(l * n) % 255]),
        }
    }
}

impl fmt::Debug for Gf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf({:#04x})", self.0)
    }
}

impl From<u8> for Gf {
    fn from(v: u8) -> Self {
        Gf(v)
    }
}

impl Add for Gf {
    type Output = Gf;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Gf) -> Gf {
        Gf(self.0 ^ rhs.0)
    }
}

impl Sub for Gf {
    type Output = Gf;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn sub(self, rhs: Gf) -> Gf {
        Gf(self.0 ^ rhs.0)
    }
}

impl Mul for Gf {
    type Output = Gf;
    fn mul(self, rhs: Gf) -> Gf {
        gf_mul(self, rhs)
    }
}

impl Div for Gf {
    type Output = Gf;
    /// Panics on division by zero.
    fn div(self, rhs: Gf) -> Gf {
        let inv = rhs.inverse().expect("division by zero in GF(256)");
        self * inv
    }
}

pub fn gf_mul(a: Gf, b: Gf) -> Gf {
    if a.0 == 0 || b.0 == 0 {
        return Gf::ZERO;
    }
    Gf(EXP[LOG[a.0 as usize] as usize + LOG[b.0 as usize] as usize])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Carry-less multiply then reduce; independent of the tables.
    fn slow_mul(a: u8, b: u8) -> u8 {
        let mut acc: u16 = 0;
        for i in 0..8 {
            if b >> i & 1 == 1 {
                acc ^= (a as u16) << i;
            }
        }
        for bit in (8..16).rev() {
            if acc >> bit & 1 == 1 {
                acc ^= PRIMITIVE_POLY << (bit - 8);
            }
        }
        acc as u8
    }

    #[test]
    fn small_products() {
        for x in 0..=255u8 {
            assert_eq!(gf_mul(Gf(0), Gf(x)), Gf(0));
            assert_eq!(gf_mul(Gf(1), Gf(x)), Gf(x));
        }
        assert_eq!(gf_mul(Gf(2), Gf(2)), Gf(4));
    }

    #[test]
    fn tables_match_schoolbook_multiplication() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(gf_mul(Gf(a), Gf(b)).0, slow_mul(a, b), "{a} * {b}");
            }
        }
    }

    #[test]
    fn every_nonzero_element_has_an_inverse() {
        for a in 1..=255u8 {
            let inv = Gf(a).inverse().unwrap();
            assert_eq!(Gf(a) * inv, Gf::ONE);
        }
        assert_eq!(Gf(0).inverse(), None);
    }

    #[test]
    fn alpha_generates_the_multiplicative_group() {
        let mut seen = [false; 256];
        for i in 0..255 {
            let v = Gf::exp(i).0 as usize;
            assert!(!seen[v]);
            seen[v] = true;
        }
        assert!(!seen[0]);
    }

    proptest! {
        #[test]
        fn field_axioms(a: u8, b: u8, c: u8) {
            let (a, b, c) = (Gf(a), Gf(b), Gf(c));
            prop_assert_eq!(a * b, b * a);
            prop_assert_eq!((a * b) * c, a * (b * c));
            prop_assert_eq!(a * (b + c), a * b + a * c);
        }
    }
}
