//! Residue classes `B(i, 8^m)`, linear congruences, and the exact preimage
//! of a class under the third iterate as a union of classes one level finer.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::maps::BranchTable;

/// `8^level` as an arbitrary-precision integer.
pub fn pow8(level: u32) -> BigUint {
    BigUint::one() << (3 * level as usize)
}

/// The set `B(residue, 8^level)` of positive integers congruent to
/// `residue` modulo `8^level`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CongruenceClass {
    residue: BigUint,
    level: u32,
}

impl CongruenceClass {
    pub fn new(residue: impl Into<BigUint>, level: u32) -> Result<Self> {
        let residue = residue.into();
        if level == 0 {
            return Err(Error::Domain("class level must be at least 1".into()));
        }
        if residue >= pow8(level) {
            return Err(Error::Domain(format!(
                "residue {residue} is out of range for modulus 8^{level}"
            )));
        }
        Ok(Self { residue, level })
    }

    /// The class at `level` that contains `n` (the class indicator `i^(m)(n)`).
    pub fn containing(n: &BigUint, level: u32) -> Result<Self> {
        if level == 0 {
            return Err(Error::Domain("class level must be at least 1".into()));
        }
        Ok(Self { residue: n % pow8(level), level })
    }

    pub fn residue(&self) -> &BigUint {
        &self.residue
    }

    pub fn residue_u64(&self) -> Option<u64> {
        self.residue.to_u64()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn modulus(&self) -> BigUint {
        pow8(self.level)
    }

    /// `residue mod 8`.
    pub fn base_residue(&self) -> u8 {
        (self.residue.iter_u64_digits().next().unwrap_or(0) & 7) as u8
    }

    pub fn is_even(&self) -> bool {
        self.base_residue().is_multiple_of(2)
    }

    /// Base-8 digits `s_0, …, s_{m-1}` of the residue, least significant first.
    pub fn digits(&self) -> Vec<u8> {
        let mut r = self.residue.clone();
        let eight = BigUint::from(8u32);
        (0..self.level)
            .map(|_| {
                let (q, d) = r.div_rem(&eight);
                r = q;
                d.to_u8().unwrap_or(0)
            })
            .collect()
    }

    pub fn contains(&self, n: &BigUint) -> bool {
        !n.is_zero() && n % self.modulus() == self.residue
    }

    /// The eight classes `B(residue + 8^level·h, 8^(level+1))`, `h = 0..8`.
    pub fn refinements(&self) -> Vec<CongruenceClass> {
        let step = self.modulus();
        (0u32..8)
            .map(|h| CongruenceClass {
                residue: &self.residue + &step * h,
                level: self.level + 1,
            })
            .collect()
    }
}

impl fmt::Display for CongruenceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "B({}, {})", self.residue, self.modulus())
    }
}

/// A finite disjoint union of classes sharing one level, kept sorted by residue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassUnion {
    level: u32,
    members: Vec<CongruenceClass>,
}

impl ClassUnion {
    pub fn new(level: u32, mut members: Vec<CongruenceClass>) -> Result<Self> {
        if level == 0 {
            return Err(Error::Domain("class level must be at least 1".into()));
        }
        if let Some(c) = members.iter().find(|c| c.level != level) {
            return Err(Error::Domain(format!("{c} does not belong to level {level}")));
        }
        members.sort();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("union members must be distinct".into()));
        }
        Ok(Self { level, members })
    }

    pub fn empty(level: u32) -> Self {
        Self { level, members: Vec::new() }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn members(&self) -> &[CongruenceClass] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Members with an even residue (`A_e`).
    pub fn even_members(&self) -> impl Iterator<Item = &CongruenceClass> {
        self.members.iter().filter(|c| c.is_even())
    }

    /// Members with an odd residue (`A_o`).
    pub fn odd_members(&self) -> impl Iterator<Item = &CongruenceClass> {
        self.members.iter().filter(|c| !c.is_even())
    }

    pub fn even_count(&self) -> usize {
        self.even_members().count()
    }

    pub fn odd_count(&self) -> usize {
        self.odd_members().count()
    }

    pub fn contains(&self, n: &BigUint) -> bool {
        if n.is_zero() {
            return false;
        }
        let r = n % pow8(self.level);
        self.members.binary_search_by(|c| c.residue.cmp(&r)).is_ok()
    }

    /// Members lying inside `coarse`, a class at this union's level or coarser.
    pub fn restricted_to(&self, coarse: &CongruenceClass) -> ClassUnion {
        let modulus = coarse.modulus();
        let members = self
            .members
            .iter()
            .filter(|c| c.level >= coarse.level && &c.residue % &modulus == coarse.residue)
            .cloned()
            .collect();
        ClassUnion { level: self.level, members }
    }
}

/// All `x ∈ [0, modulus)` with `a·x ≡ b (mod modulus)`, ascending.
///
/// Empty iff `gcd(a, modulus)` does not divide `b`; otherwise there are
/// exactly `gcd(a, modulus)` solutions.
pub fn solve_linear_congruence(a: &BigInt, b: &BigInt, modulus: &BigUint) -> Result<Vec<BigUint>> {
    if *modulus < BigUint::from(2u32) {
        return Err(Error::Domain(format!("congruence modulus must be ≥ 2, got {modulus}")));
    }
    let n = BigInt::from_biguint(Sign::Plus, modulus.clone());
    let a = a.mod_floor(&n);
    let b = b.mod_floor(&n);
    let eg = a.extended_gcd(&n);
    let d = eg.gcd;
    if !b.is_multiple_of(&d) {
        return Ok(Vec::new());
    }
    let period = &n / &d;
    let x0 = (eg.x * (&b / &d)).mod_floor(&period);
    let count = d.to_biguint().unwrap_or_default();
    let period = period.to_biguint().unwrap_or_default();
    let x0 = x0.to_biguint().unwrap_or_default();
    let mut out = Vec::new();
    let mut t = BigUint::zero();
    while t < count {
        out.push(&x0 + &period * &t);
        t += 1u32;
    }
    Ok(out)
}

/// `S⁻¹ B(j, 8^m)` as the union of the classes `B(l, 8^(m+1))` it consists of.
///
/// Writing `l = i + 8h` with `i = l mod 8`, a class is in the preimage
/// exactly when `m_i·h ≡ j − x_i (mod 8^m)`.
pub fn preimage_class(target: &CongruenceClass) -> ClassUnion {
    let level = target.level();
    let modulus = target.modulus();
    let table = BranchTable::standard();
    let images = table.images();
    let j = BigInt::from_biguint(Sign::Plus, target.residue().clone());
    let mut members = Vec::with_capacity(11);
    for (i, branch) in table.branches().iter().enumerate() {
        let rhs = &j - BigInt::from(images[i]);
        let hs = solve_linear_congruence(&BigInt::from(branch.multiplier), &rhs, &modulus)
            .expect("8^m ≥ 8 is a valid modulus");
        members.extend(hs.into_iter().map(|h| CongruenceClass {
            residue: BigUint::from(i) + h * 8u32,
            level: level + 1,
        }));
    }
    ClassUnion::new(level + 1, members).expect("solutions are distinct classes at level m+1")
}

/// `S⁻¹` of a union: the union of the member preimages, one level finer.
pub fn preimage_union(union: &ClassUnion) -> ClassUnion {
    let members = union
        .members()
        .iter()
        .flat_map(|c| preimage_class(c).members)
        .collect();
    ClassUnion::new(union.level() + 1, members).expect("preimages of disjoint classes are disjoint")
}

/// Splits `B(i, 8^m)` into its eight subclasses at level `m+1` and pairs
/// each with the level-`m` class containing its image under `S`.
pub fn forward_split(class: &CongruenceClass) -> Vec<(CongruenceClass, CongruenceClass)> {
    let level = class.level();
    let modulus = class.modulus();
    let branch = BranchTable::standard().branch(class.base_residue() as u64);
    let base = (class.residue() * branch.multiplier + branch.offset) / 8u32;
    let stride = pow8(level - 1) * branch.multiplier;
    class
        .refinements()
        .into_iter()
        .enumerate()
        .map(|(h, sub)| {
            let image = (&base + &stride * h) % &modulus;
            (sub, CongruenceClass { residue: image, level })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::third_iterate;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn class(r: u64, level: u32) -> CongruenceClass {
        CongruenceClass::new(r, level).unwrap()
    }

    fn residues(u: &ClassUnion) -> BTreeSet<u64> {
        u.members().iter().map(|c| c.residue_u64().unwrap()).collect()
    }

    fn solve(a: i64, b: i64, n: u64) -> Vec<u64> {
        solve_linear_congruence(&BigInt::from(a), &BigInt::from(b), &BigUint::from(n))
            .unwrap()
            .into_iter()
            .map(|x| x.to_u64().unwrap())
            .collect()
    }

    #[test]
    fn solver_examples() {
        assert_eq!(solve(6, -2, 8), vec![1, 5]);
        assert_eq!(solve(1, 0, 8), vec![0]);
        assert_eq!(solve(36, -16, 8), vec![0, 2, 4, 6]);
        assert!(solve(6, 1, 8).is_empty());
        assert_eq!(solve(0, 0, 4), vec![0, 1, 2, 3]);
        assert!(solve_linear_congruence(&BigInt::one(), &BigInt::zero(), &BigUint::one()).is_err());
    }

    #[test]
    fn class_validation_and_helpers() {
        assert!(CongruenceClass::new(64u32, 2).is_err());
        assert!(CongruenceClass::new(0u32, 0).is_err());
        let c = class(0o351, 3);
        assert_eq!(c.digits(), vec![1, 5, 3]);
        assert_eq!(c.base_residue(), 1);
        assert_eq!(c.to_string(), "B(233, 512)");
        assert!(c.contains(&BigUint::from(233u32 + 512 * 7)));
        assert!(!c.contains(&BigUint::from(234u32)));
        let refs: Vec<u64> = c.refinements().iter().map(|r| r.residue_u64().unwrap()).collect();
        assert_eq!(refs, (0..8).map(|h| 233 + 512 * h).collect::<Vec<_>>());
        assert_eq!(
            CongruenceClass::containing(&BigUint::from(1000u32), 2).unwrap(),
            class(1000 % 64, 2)
        );
    }

    #[test]
    fn union_rejects_mixed_levels_and_duplicates() {
        assert!(ClassUnion::new(2, vec![class(1, 2), class(1, 1)]).is_err());
        assert!(ClassUnion::new(2, vec![class(1, 2), class(1, 2)]).is_err());
        let u = ClassUnion::new(2, vec![class(9, 2), class(1, 2)]).unwrap();
        assert_eq!(residues(&u).into_iter().collect::<Vec<_>>(), vec![1, 9]);
    }

    #[test]
    fn golden_preimages_at_level_one() {
        let expected: [&[u64]; 8] = [
            &[0, 10, 42, 3, 19, 35, 51, 20, 52, 21, 53],
            &[1, 33, 22, 54, 8],
            &[2, 34, 12, 44, 13, 45, 7, 23, 39, 55, 16],
            &[25, 57, 14, 46, 24],
            &[26, 58, 11, 27, 43, 59, 4, 36, 5, 37, 32],
            &[17, 49, 6, 38, 40],
            &[18, 50, 28, 60, 29, 61, 15, 31, 47, 63, 48],
            &[9, 41, 30, 62, 56],
        ];
        for (j, list) in expected.iter().enumerate() {
            let u = preimage_class(&class(j as u64, 1));
            assert_eq!(u.level(), 2);
            assert_eq!(residues(&u), list.iter().copied().collect(), "j = {j}");
        }
    }

    #[test]
    fn residue_51_not_56_feeds_class_three_into_zero() {
        // B(56,64) lies in B(0,8), so it cannot be part of B(3,8) ∩ S⁻¹B(0,8).
        let into_zero = preimage_class(&class(0, 1)).restricted_to(&class(3, 1));
        assert_eq!(residues(&into_zero), [3, 19, 35, 51].into_iter().collect());
        assert!(preimage_class(&class(7, 1)).contains(&BigUint::from(56u32)));
    }

    #[test]
    fn cardinality_law_levels_one_to_three() {
        for level in 1..=3u32 {
            for j in 0..8u64.pow(level) {
                let u = preimage_class(&class(j, level));
                let (e, o) = if j % 2 == 0 { (5, 6) } else { (3, 2) };
                assert_eq!((u.even_count(), u.odd_count()), (e, o), "j={j} m={level}");
            }
        }
    }

    #[test]
    fn level_two_zero_by_enumeration() {
        let target = class(0, 2);
        let mut found = BTreeSet::new();
        for n in 1..(512u64 * 64) {
            if third_iterate(n as u128).unwrap().is_multiple_of(64) {
                found.insert(n % 512);
            }
        }
        let u = preimage_class(&target);
        assert_eq!(residues(&u), found);
        assert_eq!((u.even_count(), u.odd_count()), (5, 6));
    }

    #[test]
    fn membership_matches_enumeration() {
        for level in 1..=2u32 {
            let modulus = 8u64.pow(level);
            let unions: Vec<ClassUnion> =
                (0..modulus).map(|j| preimage_class(&class(j, level))).collect();
            for n in 1..8u64.pow(level + 2) {
                let image = (third_iterate(n as u128).unwrap() % modulus as u128) as usize;
                let big = BigUint::from(n);
                for (j, u) in unions.iter().enumerate() {
                    assert_eq!(u.contains(&big), j == image, "n={n} j={j} m={level}");
                }
            }
        }
    }

    #[test]
    fn preimages_partition_next_level() {
        for level in 1..=3u32 {
            let mut seen = BTreeSet::new();
            for j in 0..8u64.pow(level) {
                for c in preimage_class(&class(j, level)).members() {
                    assert!(seen.insert(c.residue_u64().unwrap()));
                }
            }
            assert_eq!(seen.len() as u64, 8u64.pow(level + 1));
        }
    }

    #[test]
    fn forward_split_examples() {
        let images: BTreeSet<u64> = forward_split(&class(0, 1))
            .iter()
            .map(|(_, img)| img.residue_u64().unwrap())
            .collect();
        assert_eq!(images, (0..8).collect());

        let images: Vec<u64> = forward_split(&class(3, 1))
            .iter()
            .map(|(_, img)| img.residue_u64().unwrap())
            .collect();
        assert_eq!(images.iter().filter(|&&r| r == 0).count(), 4);
        assert_eq!(images.iter().filter(|&&r| r == 4).count(), 4);
    }

    #[test]
    fn forward_split_level_two_by_enumeration() {
        let split = forward_split(&class(1, 2));
        for (sub, image) in &split {
            let l = sub.residue_u64().unwrap();
            for k in 0..8u64 {
                let n = l + 512 * k;
                let s = third_iterate(n as u128).unwrap() as u64;
                assert_eq!(s % 64, image.residue_u64().unwrap());
            }
        }
        let mut counts = std::collections::BTreeMap::new();
        for (_, image) in &split {
            *counts.entry(image.residue_u64().unwrap()).or_insert(0) += 1;
        }
        assert!(counts.values().all(|c| [1, 2, 4].contains(c)));
        assert_eq!(counts.values().sum::<i32>(), 8);
    }

    #[test]
    fn forward_split_agrees_with_preimage() {
        for level in 1..=2u32 {
            let modulus = 8u64.pow(level);
            let unions: Vec<ClassUnion> =
                (0..modulus).map(|j| preimage_class(&class(j, level))).collect();
            for i in 0..modulus {
                for (sub, image) in forward_split(&class(i, level)) {
                    let j = image.residue_u64().unwrap() as usize;
                    for (jj, u) in unions.iter().enumerate() {
                        let member = u.members().contains(&sub);
                        assert_eq!(member, jj == j);
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn solver_matches_brute_force(a in -200i64..200, b in -200i64..200, n in 2u64..200) {
            let got = solve(a, b, n);
            let want: Vec<u64> = (0..n)
                .filter(|&x| (a as i128 * x as i128 - b as i128).rem_euclid(n as i128) == 0)
                .collect();
            let d = (a.rem_euclid(n as i64) as u64).gcd(&n);
            prop_assert_eq!(&got, &want);
            prop_assert!(got.is_empty() || got.len() as u64 == d);
        }
    }
}
