//! The Collatz map `T`, its third iterate `S = T∘T∘T`, and the affine
//! branch table that gives `S` in closed form on each residue class mod 8.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Common denominator of every branch of `S`.
pub const DIVISOR: u32 = 8;

/// One branch `n ↦ (multiplier·n + offset) / 8` of the third iterate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AffineBranch {
    pub multiplier: u32,
    pub offset: u32,
}

impl AffineBranch {
    pub const fn new(multiplier: u32, offset: u32) -> Self {
        Self { multiplier, offset }
    }

    /// `S(residue)`, i.e. the image of the smallest representative.
    pub fn image_of(&self, residue: u32) -> u32 {
        (self.multiplier * residue + self.offset) / DIVISOR
    }

    /// `gcd(multiplier, 8)`; this is also `gcd(multiplier, 8^m)` for every `m ≥ 1`.
    pub fn gcd_with_divisor(&self) -> u32 {
        self.multiplier.gcd(&DIVISOR)
    }

    fn apply_u128(&self, n: u128) -> Option<u128> {
        let scaled = n.checked_mul(self.multiplier as u128)?;
        let shifted = scaled.checked_add(self.offset as u128)?;
        Some(shifted / DIVISOR as u128)
    }

    fn apply_big(&self, n: &BigUint) -> BigUint {
        (n * self.multiplier + self.offset) / DIVISOR
    }
}

/// The eight branches of `S`, indexed by residue mod 8.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchTable {
    branches: [AffineBranch; 8],
}

/// `S(n) = (m_i n + r_i)/8` for `n ≡ i (mod 8)`.
pub const STANDARD_TABLE: BranchTable = BranchTable {
    branches: [
        AffineBranch::new(1, 0),
        AffineBranch::new(6, 2),
        AffineBranch::new(6, 4),
        AffineBranch::new(36, 20),
        AffineBranch::new(6, 8),
        AffineBranch::new(6, 2),
        AffineBranch::new(6, 4),
        AffineBranch::new(36, 20),
    ],
};

impl BranchTable {
    pub fn standard() -> &'static BranchTable {
        &STANDARD_TABLE
    }

    pub fn branch(&self, residue: u64) -> AffineBranch {
        self.branches[(residue & 7) as usize]
    }

    pub fn branches(&self) -> &[AffineBranch; 8] {
        &self.branches
    }

    /// `x_i = S(i)` for `i = 0..8`.
    pub fn images(&self) -> [u32; 8] {
        std::array::from_fn(|i| self.branches[i].image_of(i as u32))
    }

    /// `d_i = gcd(m_i, 8)` for `i = 0..8`.
    pub fn gcds(&self) -> [u32; 8] {
        std::array::from_fn(|i| self.branches[i].gcd_with_divisor())
    }

    /// Checks that every branch maps its own residue class to integers.
    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.branches.iter().enumerate() {
            // (m·(i + 8k) + r) ≡ m·i + r (mod 8), so checking i is enough.
            if !(b.multiplier * i as u32 + b.offset).is_multiple_of(DIVISOR) {
                return Err(Error::Inconsistent(format!(
                    "branch {i} ({}·n + {})/8 is not integral on its class",
                    b.multiplier, b.offset
                )));
            }
        }
        Ok(())
    }
}

/// Integer representations an orbit can be iterated in.
///
/// `u128` is checked and reports overflow; `BigUint` never overflows.
pub trait OrbitInt: Clone + Ord + fmt::Display + Send + Sync + Sized {
    fn from_u64(v: u64) -> Self;
    fn collatz_step(&self) -> Result<Self>;
    fn third_iterate(&self) -> Result<Self>;
    /// `self mod 8^level`; requires `level ≤ 21`.
    fn residue_pow8(&self, level: u32) -> u64;
    fn to_small(&self) -> Option<u64>;
    fn to_biguint(&self) -> BigUint;
}

fn pow8_mask(level: u32) -> u64 {
    debug_assert!(level <= 21);
    (1u64 << (3 * level)) - 1
}

impl OrbitInt for u128 {
    fn from_u64(v: u64) -> Self {
        v as u128
    }

    fn collatz_step(&self) -> Result<Self> {
        let n = *self;
        if n == 0 {
            return Err(Error::NonPositive);
        }
        if n & 1 == 0 {
            Ok(n >> 1)
        } else {
            n.checked_mul(3)
                .and_then(|v| v.checked_add(1))
                .ok_or_else(|| Error::Overflow { value: n.to_string() })
        }
    }

    fn third_iterate(&self) -> Result<Self> {
        let n = *self;
        if n == 0 {
            return Err(Error::NonPositive);
        }
        STANDARD_TABLE
            .branch(n as u64)
            .apply_u128(n)
            .ok_or_else(|| Error::Overflow { value: n.to_string() })
    }

    fn residue_pow8(&self, level: u32) -> u64 {
        (*self as u64) & pow8_mask(level)
    }

    fn to_small(&self) -> Option<u64> {
        u64::try_from(*self).ok()
    }

    fn to_biguint(&self) -> BigUint {
        BigUint::from(*self)
    }
}

impl OrbitInt for BigUint {
    fn from_u64(v: u64) -> Self {
        BigUint::from(v)
    }

    fn collatz_step(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::NonPositive);
        }
        if self.is_even() {
            Ok(self >> 1u32)
        } else {
            Ok(self * 3u32 + 1u32)
        }
    }

    fn third_iterate(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::NonPositive);
        }
        let low = self.iter_u64_digits().next().unwrap_or(0);
        Ok(STANDARD_TABLE.branch(low).apply_big(self))
    }

    fn residue_pow8(&self, level: u32) -> u64 {
        self.iter_u64_digits().next().unwrap_or(0) & pow8_mask(level)
    }

    fn to_small(&self) -> Option<u64> {
        self.to_u64()
    }

    fn to_biguint(&self) -> BigUint {
        self.clone()
    }
}

/// `T(n)`: `n/2` for even `n`, `3n+1` for odd `n`.
pub fn collatz_step(n: u128) -> Result<u128> {
    n.collatz_step()
}

/// `S(n) = T(T(T(n)))` evaluated through the branch table.
pub fn third_iterate(n: u128) -> Result<u128> {
    n.third_iterate()
}

/// Arbitrary-precision `S(n)`.
pub fn third_iterate_big(n: &BigUint) -> Result<BigUint> {
    n.third_iterate()
}

/// All `n ≤ limit` with `S(n) = n`.
pub fn fixed_points_upto(limit: u64) -> Result<Vec<u64>> {
    if limit < 4 {
        return Err(Error::Domain(format!("fixed point scan needs limit ≥ 4, got {limit}")));
    }
    let mut out = Vec::new();
    for n in 1..=limit {
        if third_iterate(n as u128)? == n as u128 {
            out.push(n);
        }
    }
    Ok(out)
}
