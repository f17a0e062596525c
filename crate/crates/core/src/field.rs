//! Scalar fields the encoders and the decoder operate over.
//!
//! Approximate-computation runs use `f64` with continuous random
//! coefficients. Exactness checks use [`Fp`], the prime field of order
//! 2^31 - 1, where elimination is exact and rank deficiency is a genuine
//! event rather than a tolerance decision.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub trait Field:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    /// True when arithmetic is exact and zero tests need no tolerance.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;

    /// Multiplicative inverse. Callers must not pass zero.
    fn inv(self) -> Self;

    /// Magnitude used for pivot selection and negligibility tests.
    /// Exact fields report 0 for zero and 1 otherwise.
    fn magnitude(self) -> f64;

    fn is_zero(self) -> bool {
        self.magnitude() == 0.0
    }

    /// A nonzero encoding coefficient: Uniform(-1, 1) for reals, uniform over
    /// the nonzero residues for prime fields.
    fn random_coefficient<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// A matrix entry with the given variance. Exact fields ignore the
    /// variance and draw uniformly.
    fn random_entry<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Self;

    /// Lossy view as a real number, for norms and reporting.
    fn to_f64(self) -> f64;
}

impl Field for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }

    fn one() -> Self {
        1.0
    }

    fn inv(self) -> Self {
        1.0 / self
    }

    fn magnitude(self) -> f64 {
        self.abs()
    }

    fn random_coefficient<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let c: f64 = rng.random_range(-1.0..1.0);
            if c != 0.0 {
                return c;
            }
        }
    }

    fn random_entry<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Self {
        let z: f64 = StandardNormal.sample(rng);
        z * variance.sqrt()
    }

    fn to_f64(self) -> f64 {
        self
    }
}

/// Element of GF(p) with p = 2^31 - 1, stored reduced in `[0, p)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Fp(u64);

impl Fp {
    pub const MODULUS: u64 = (1 << 31) - 1;

    pub fn new(value: u64) -> Self {
        Fp(value % Self::MODULUS)
    }

    pub fn from_i64(value: i64) -> Self {
        Fp(value.rem_euclid(Self::MODULUS as i64) as u64)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn pow(self, mut exp: u64) -> Self {
        let mut base = self;
        let mut acc = Fp(1);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            exp >>= 1;
        }
        acc
    }
}

impl Add for Fp {
    type Output = Fp;
    fn add(self, rhs: Fp) -> Fp {
        let s = self.0 + rhs.0;
        Fp(if s >= Self::MODULUS { s - Self::MODULUS } else { s })
    }
}

impl Sub for Fp {
    type Output = Fp;
    fn sub(self, rhs: Fp) -> Fp {
        Fp(if self.0 >= rhs.0 {
            self.0 - rhs.0
        } else {
            self.0 + Self::MODULUS - rhs.0
        })
    }
}

impl Mul for Fp {
    type Output = Fp;
    fn mul(self, rhs: Fp) -> Fp {
        // both operands < 2^31, product < 2^62
        Fp((self.0 * rhs.0) % Self::MODULUS)
    }
}

impl Neg for Fp {
    type Output = Fp;
    fn neg(self) -> Fp {
        Fp(if self.0 == 0 { 0 } else { Self::MODULUS - self.0 })
    }
}

impl AddAssign for Fp {
    fn add_assign(&mut self, rhs: Fp) {
        *self = *self + rhs;
    }
}

impl SubAssign for Fp {
    fn sub_assign(&mut self, rhs: Fp) {
        *self = *self - rhs;
    }
}

impl Field for Fp {
    const EXACT: bool = true;

    fn zero() -> Self {
        Fp(0)
    }

    fn one() -> Self {
        Fp(1)
    }

    fn inv(self) -> Self {
        assert!(self.0 != 0, "inverse of zero in GF(p)");
        self.pow(Self::MODULUS - 2)
    }

    fn magnitude(self) -> f64 {
        if self.0 == 0 {
            0.0
        } else {
            1.0
        }
    }

    fn random_coefficient<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Fp(rng.random_range(1..Self::MODULUS))
    }

    fn random_entry<R: Rng + ?Sized>(rng: &mut R, _variance: f64) -> Self {
        Fp(rng.random_range(0..Self::MODULUS))
    }

    fn to_f64(self) -> f64 {
        self.0 as f64
    }
}

/// Field selector carried by configs and tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    #[default]
    Real,
    Prime,
}
