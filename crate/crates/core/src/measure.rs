//! The S-invariant probability measures `μ^(m)` on residue classes.
//!
//! Everything here is exact: values are reduced fractions of big integers.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::congruence::{pow8, preimage_class, ClassUnion, CongruenceClass};
use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Highest level `check_invariance` enumerates without an explicit override.
pub const DEFAULT_MAX_INVARIANCE_LEVEL: u32 = 3;

/// Largest block index `k` for which `measure_integer` builds `2^(k+1)`.
const MAX_BLOCK_INDEX: u64 = 1 << 20;

pub fn ratio(numer: i64, denom: i64) -> Rational {
    Rational::new(BigInt::from(numer), BigInt::from(denom))
}

/// Weight of a base residue: 1/6 when even, 1/12 when odd.
pub fn nu(sigma: u8) -> Result<Rational> {
    match sigma {
        0..=7 if sigma.is_multiple_of(2) => Ok(ratio(1, 6)),
        0..=7 => Ok(ratio(1, 12)),
        _ => Err(Error::Domain(format!("base residue must be in 0..8, got {sigma}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasureContext {
    level: u32,
}

impl MeasureContext {
    pub fn new(level: u32) -> Result<Self> {
        if level == 0 {
            return Err(Error::Domain("measure level must be at least 1".into()));
        }
        Ok(Self { level })
    }

    pub fn level(&self) -> u32 {
        self.level
    }
}

fn scale(level: u32) -> BigInt {
    BigInt::from(pow8(level - 1))
}

/// `μ^(m)(B(i, 8^m)) = ν(i mod 8) / 8^(m-1)`.
pub fn measure_class(class: &CongruenceClass) -> Rational {
    let nu = nu(class.base_residue()).expect("base residue is below 8");
    nu / Rational::from_integer(scale(class.level()))
}

/// `μ^(m)(n) = ν(n mod 8) / (2^(k+1) · 8^(m-1))` with `k = ⌊n / 8^m⌋`.
pub fn measure_integer(n: &BigUint, ctx: MeasureContext) -> Result<Rational> {
    if n.is_zero() {
        return Err(Error::NonPositive);
    }
    let block = (n / pow8(ctx.level))
        .to_u64()
        .filter(|&k| k <= MAX_BLOCK_INDEX)
        .ok_or_else(|| Error::Domain(format!("{n} is too far out for an exact weight at level {}", ctx.level)))?;
    let base = (n.iter_u64_digits().next().unwrap_or(0) & 7) as u8;
    let denom = (BigInt::one() << (block as usize + 1)) * scale(ctx.level);
    Ok(nu(base)? / Rational::from_integer(denom))
}

/// Sum of member measures; members are disjoint by construction.
pub fn measure_union(union: &ClassUnion) -> Rational {
    union
        .members()
        .iter()
        .map(measure_class)
        .fold(Rational::zero(), |acc, m| acc + m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceEntry {
    pub class: CongruenceClass,
    pub preimage_measure: Rational,
    pub class_measure: Rational,
}

impl InvarianceEntry {
    pub fn passed(&self) -> bool {
        self.preimage_measure == self.class_measure
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub level: u32,
    pub entries: Vec<InvarianceEntry>,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(InvarianceEntry::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &InvarianceEntry> {
        self.entries.iter().filter(|e| !e.passed())
    }
}

/// Compares `μ(S⁻¹B(j, 8^m))` with `μ(B(j, 8^m))` for every `j`.
pub fn check_invariance(level: u32) -> Result<InvarianceReport> {
    check_invariance_capped(level, DEFAULT_MAX_INVARIANCE_LEVEL)
}

pub fn check_invariance_capped(level: u32, max_level: u32) -> Result<InvarianceReport> {
    if level == 0 {
        return Err(Error::Domain("measure level must be at least 1".into()));
    }
    if level > max_level {
        return Err(Error::Capacity { what: "invariance check", level, max: max_level });
    }
    let count = 1u64 << (3 * level);
    let entries = (0..count)
        .into_par_iter()
        .map(|j| {
            let class = CongruenceClass::new(j, level).expect("j < 8^level");
            InvarianceEntry {
                preimage_measure: measure_union(&preimage_class(&class)),
                class_measure: measure_class(&class),
                class,
            }
        })
        .collect();
    Ok(InvarianceReport { level, entries })
}
