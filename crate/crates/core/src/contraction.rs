//! Contraction and expansion factors of the third iterate, their averages
//! under the stationary distribution, and the per-orbit Birkhoff sums.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{BranchTable, OrbitInt, DIVISOR};
use crate::markov::Distribution;
use crate::measure::{nu, Rational};

pub const DEFAULT_N_MIN: u64 = 3;
/// Largest level whose `8^level` classes `birkhoff_alpha` sums over.
pub const MAX_BIRKHOFF_LEVEL: u32 = 7;

/// `m_i / 8`: the leading-order growth of `S` on class `i`.
pub fn raw_factor(residue: u8) -> Rational {
    let b = BranchTable::standard().branch(residue as u64);
    Rational::new(BigInt::from(b.multiplier), BigInt::from(DIVISOR))
}

pub fn raw_factors() -> [Rational; 8] {
    std::array::from_fn(|i| raw_factor(i as u8))
}

/// Groups residues mod 8 that share a factor, weighting each group by its
/// stationary mass. Groups are ordered by ascending factor.
fn group_by_factor(factors: &[Rational; 8]) -> Vec<(Rational, Rational, Vec<u8>)> {
    let mut groups: Vec<(Rational, Rational, Vec<u8>)> = Vec::new();
    for (i, f) in factors.iter().enumerate() {
        let w = nu(i as u8).expect("i < 8");
        match groups.iter_mut().find(|g| &g.0 == f) {
            Some(g) => {
                g.1 += w;
                g.2.push(i as u8);
            }
            None => groups.push((f.clone(), w, vec![i as u8])),
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    groups
}

/// `(factor, weight)` pairs `(1/8, 1/6), (3/4, 2/3), (9/2, 1/6)`.
pub fn raw_weights() -> Vec<(Rational, Rational)> {
    group_by_factor(&raw_factors()).into_iter().map(|(f, w, _)| (f, w)).collect()
}

/// Stationary-weighted geometric mean of the raw factors, exactly.
///
/// With `D` the common denominator of the weights, the mean is the exact
/// `D`-th root of `Π factor^(weight·D)`; for the Collatz table `D = 6` and
/// the product is `(1/8)·(3/4)^4·(9/2) = 729/4096 = (3/4)^6`.
pub fn raw_geometric_mean() -> Result<Rational> {
    let weights = raw_weights();
    let d = weights.iter().fold(BigInt::one(), |acc, (_, w)| acc.lcm(w.denom()));
    let mut product = Rational::one();
    for (factor, w) in &weights {
        let exponent = (w * Rational::from_integer(d.clone())).to_integer();
        let e = exponent.to_i32().ok_or_else(|| Error::Inconsistent("weight exponent too large".into()))?;
        product *= num_traits::pow::Pow::pow(factor, e);
    }
    let root = d.to_u32().ok_or_else(|| Error::Inconsistent("weight denominator too large".into()))?;
    let exact_root = |v: &BigInt| -> Option<BigInt> {
        let r = v.nth_root(root);
        (num_traits::pow::Pow::pow(&r, root) == *v).then_some(r)
    };
    match (exact_root(product.numer()), exact_root(product.denom())) {
        (Some(p), Some(q)) => Ok(Rational::new(p, q)),
        _ => Err(Error::Inconsistent(format!(
            "weighted product {product} has no rational {root}-th root"
        ))),
    }
}

/// `c_i(n_min) = (m_i·n_min + r_i) / (8·n_min)`, i.e. `S(n) / n` evaluated
/// at `n = n_min`; `S(n) < c_i·n` for every `n > n_min` in class `i ≠ 0`.
pub fn bound_factors(n_min: u64) -> Result<[Rational; 8]> {
    if n_min == 0 {
        return Err(Error::Domain("n_min must be at least 1".into()));
    }
    let table = BranchTable::standard();
    Ok(std::array::from_fn(|i| {
        let b = table.branch(i as u64);
        let n = BigInt::from(n_min);
        Rational::new(&n * b.multiplier + b.offset, n * DIVISOR)
    }))
}

/// Groups of classes sharing one `c_i`, with their stationary mass:
/// `{0}: 1/6, {1,5}: 1/6, {2,6}: 1/3, {3,7}: 1/6, {4}: 1/6`.
pub fn bound_weights(n_min: u64) -> Result<Vec<(Vec<u8>, Rational, Rational)>> {
    let mut groups = group_by_factor(&bound_factors(n_min)?);
    groups.sort_by(|a, b| a.2.cmp(&b.2));
    Ok(groups.into_iter().map(|(f, w, c)| (c, w, f)).collect())
}

fn ln(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN).ln()
}

/// `exp(Σ Ω_k · ln c_k)` over the groups of [`bound_weights`].
pub fn bounded_geometric_mean(n_min: u64) -> Result<f64> {
    let sum: f64 = bound_weights(n_min)?
        .iter()
        .map(|(_, w, c)| w.to_f64().unwrap_or(f64::NAN) * ln(c))
        .sum();
    Ok(sum.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BirkhoffConstants {
    pub alpha: f64,
    pub beta: f64,
}

/// `α = Σ_i P_stat(m)_i · ln c_(i mod 8)` summed over all `8^m` classes,
/// and `β = e^(α/2)`.
pub fn birkhoff_alpha(level: u32, n_min: u64) -> Result<BirkhoffConstants> {
    if level == 0 {
        return Err(Error::Domain("level must be at least 1".into()));
    }
    if level > MAX_BIRKHOFF_LEVEL {
        return Err(Error::Capacity { what: "Birkhoff average", level, max: MAX_BIRKHOFF_LEVEL });
    }
    let logs: Vec<f64> = bound_factors(n_min)?.iter().map(ln).collect();
    let stationary = Distribution::alternating(level)?;
    let alpha = stationary
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| w.to_f64().unwrap_or(f64::NAN) * logs[i % 8])
        .sum::<f64>();
    Ok(BirkhoffConstants { alpha, beta: (alpha / 2.0).exp() })
}

/// The same average in grouped form: per-class weights `1/(6·8^(m-1))` and
/// `1/(12·8^(m-1))`, each shared by `8^(m-1)` classes.
pub fn grouped_alpha(level: u32, n_min: u64) -> Result<f64> {
    if level == 0 {
        return Err(Error::Domain("level must be at least 1".into()));
    }
    let logs: Vec<f64> = bound_factors(n_min)?.iter().map(ln).collect();
    let classes = 8f64.powi(level as i32 - 1);
    let even: f64 = logs.iter().step_by(2).sum();
    let odd: f64 = logs.iter().skip(1).step_by(2).sum();
    Ok((even / (6.0 * classes) + odd / (12.0 * classes)) * classes)
}

/// How `S(n)` compares with the bound `c_i(n_min)·n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Domination {
    Strict,
    Equal,
    Violated,
}

/// Compares `S(n)` with `c_(n mod 8)(n_min)·n` exactly.
pub fn dominate(n: &BigUint, n_min: u64) -> Result<Domination> {
    let s = n.third_iterate()?;
    let b = BranchTable::standard().branch(n.iter_u64_digits().next().unwrap_or(0));
    // S(n) < c·n  ⇔  8·n_min·S(n) < (m·n_min + r)·n
    let lhs = s * (DIVISOR as u64 * n_min);
    let rhs = n * (b.multiplier as u64 * n_min + b.offset as u64);
    Ok(match lhs.cmp(&rhs) {
        Ordering::Less => Domination::Strict,
        Ordering::Equal => Domination::Equal,
        Ordering::Greater => Domination::Violated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitAverage {
    pub start: String,
    /// Number of S-steps averaged over (values outside {1, 2, 4}).
    pub steps: u64,
    /// Mean of `ln c_(n_j mod 8)`; `None` when the start is already absorbed.
    pub mean_log: Option<f64>,
    pub absorbed: bool,
    /// `n_(j+1) < c·n_j` held strictly for every `n_j > n_min` and with
    /// equality where it must (`n_j = n_min` or class 0).
    pub domination_holds: bool,
}

fn in_cycle(v: Option<u64>) -> bool {
    matches!(v, Some(1 | 2 | 4))
}

/// Runs `S` from `n0` for at most `steps` steps or until it reaches
/// {1, 2, 4}, averaging `ln c_i` over the classes visited on the way.
pub fn orbit_log_average(n0: &BigUint, steps: u64, n_min: u64) -> Result<OrbitAverage> {
    if n0.is_zero() {
        return Err(Error::NonPositive);
    }
    let logs: Vec<f64> = bound_factors(n_min)?.iter().map(ln).collect();
    let n_min_big = BigUint::from(n_min);
    let mut n = n0.clone();
    let mut taken = 0u64;
    let mut total = 0.0;
    let mut holds = true;
    while taken < steps && !in_cycle(n.to_small()) {
        let class = n.residue_pow8(1) as usize;
        total += logs[class];
        if n >= n_min_big {
            let d = dominate(&n, n_min)?;
            let must_be_equal = class == 0 || n == n_min_big;
            holds &= if must_be_equal { d == Domination::Equal } else { d == Domination::Strict };
        }
        n = n.third_iterate()?;
        taken += 1;
    }
    Ok(OrbitAverage {
        start: n0.to_string(),
        steps: taken,
        mean_log: (taken > 0).then(|| total / taken as f64),
        absorbed: in_cycle(n.to_small()),
        domination_holds: holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorRow {
    pub class: u8,
    pub raw: String,
    pub bound: String,
    pub bound_decimal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub level: u32,
    pub n_min: u64,
    pub factors: Vec<FactorRow>,
    pub f_raw: String,
    pub f_bound: f64,
    pub alpha: f64,
    pub beta: f64,
}

pub fn contraction_report(n_min: u64, level: u32) -> Result<ContractionReport> {
    let bounds = bound_factors(n_min)?;
    let factors = raw_factors()
        .iter()
        .zip(&bounds)
        .enumerate()
        .map(|(i, (raw, bound))| FactorRow {
            class: i as u8,
            raw: raw.to_string(),
            bound: bound.to_string(),
            bound_decimal: bound.to_f64().unwrap_or(f64::NAN),
        })
        .collect();
    let constants = birkhoff_alpha(level, n_min)?;
    Ok(ContractionReport {
        level,
        n_min,
        factors,
        f_raw: raw_geometric_mean()?.to_string(),
        f_bound: bounded_geometric_mean(n_min)?,
        alpha: constants.alpha,
        beta: constants.beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::ratio;

    #[test]
    fn raw_factor_values() {
        let f = raw_factors();
        assert_eq!(f[0], ratio(1, 8));
        for i in [1, 2, 4, 5, 6] {
            assert_eq!(f[i], ratio(3, 4));
        }
        assert_eq!(f[3], ratio(9, 2));
        assert_eq!(f[7], ratio(9, 2));
    }

    #[test]
    fn raw_mean_is_three_quarters() {
        let w = raw_weights();
        assert_eq!(w, vec![(ratio(1, 8), ratio(1, 6)), (ratio(3, 4), ratio(2, 3)), (ratio(9, 2), ratio(1, 6))]);
        assert_eq!(w.iter().fold(Rational::zero(), |a, (_, x)| a + x), Rational::one());
        assert_eq!(raw_geometric_mean().unwrap(), ratio(3, 4));
        let sixth = ratio(1, 8) * ratio(3, 4).pow(4) * ratio(9, 2);
        assert_eq!(sixth, ratio(729, 4096));
        assert_eq!(ratio(3, 4).pow(6), ratio(729, 4096));
    }

    #[test]
    fn bound_factors_at_three() {
        let c = bound_factors(3).unwrap();
        let want = [ratio(1, 8), ratio(5, 6), ratio(11, 12), ratio(16, 3), ratio(13, 12), ratio(5, 6), ratio(11, 12), ratio(16, 3)];
        assert_eq!(c, want);
        // The printed products (3/4)(10/9), (9/2)(32/27), ...
        assert_eq!(c[1], ratio(3, 4) * ratio(10, 9));
        assert_eq!(c[2], ratio(3, 4) * ratio(11, 9));
        assert_eq!(c[3], ratio(9, 2) * ratio(32, 27));
        assert_eq!(c[4], ratio(3, 4) * ratio(13, 9));
        assert!(bound_factors(0).is_err());
    }

    #[test]
    fn bound_factors_approach_raw() {
        let c = bound_factors(1_000_000).unwrap();
        let raw = raw_factors();
        assert_eq!(c[0], raw[0]);
        for i in 1..8 {
            let gap = (&c[i] - &raw[i]).to_f64().unwrap();
            assert!(gap > 0.0 && gap < 1e-5, "class {i}: {gap}");
        }
    }

    #[test]
    fn bound_weight_groups() {
        let groups = bound_weights(3).unwrap();
        let shape: Vec<(Vec<u8>, Rational)> = groups.iter().map(|(c, w, _)| (c.clone(), w.clone())).collect();
        assert_eq!(
            shape,
            vec![
                (vec![0], ratio(1, 6)),
                (vec![1, 5], ratio(1, 6)),
                (vec![2, 6], ratio(1, 3)),
                (vec![3, 7], ratio(1, 6)),
                (vec![4], ratio(1, 6)),
            ]
        );
    }

    #[test]
    fn bounded_mean() {
        let f = bounded_geometric_mean(3).unwrap();
        assert!((f - 0.8926).abs() < 5e-4, "{f}");
        let mut prev = f;
        for n_min in [4, 10, 100, 1000, 1_000_000] {
            let next = bounded_geometric_mean(n_min).unwrap();
            assert!(next < prev && next > 0.75);
            prev = next;
        }
        assert!((prev - 0.75).abs() < 1e-5);
    }

    #[test]
    fn alpha_and_beta() {
        let c = birkhoff_alpha(1, 3).unwrap();
        assert!((c.alpha + 0.1136).abs() < 1e-3, "{}", c.alpha);
        assert!((c.beta - 0.944).abs() < 1e-3, "{}", c.beta);
        assert!(c.alpha < 0.0 && c.beta < 1.0);
        // ln of the bounded mean is the same average.
        assert!((bounded_geometric_mean(3).unwrap().ln() - c.alpha).abs() < 1e-12);
        for level in 2..=3 {
            let other = birkhoff_alpha(level, 3).unwrap();
            assert!((other.alpha - c.alpha).abs() < 1e-12);
            assert!((grouped_alpha(level, 3).unwrap() - c.alpha).abs() < 1e-12);
        }
        assert!(birkhoff_alpha(0, 3).is_err());
    }

    #[test]
    fn domination_at_and_above_n_min() {
        // At n = n_min the bound is attained exactly: S(3) = 16 = (16/3)·3.
        assert_eq!(dominate(&BigUint::from(3u32), 3).unwrap(), Domination::Equal);
        for n in 4u32..2000 {
            let want = if n % 8 == 0 { Domination::Equal } else { Domination::Strict };
            assert_eq!(dominate(&BigUint::from(n), 3).unwrap(), want, "n = {n}");
        }
    }

    #[test]
    fn orbit_of_27() {
        let avg = orbit_log_average(&BigUint::from(27u32), 10_000, 3).unwrap();
        assert!(avg.absorbed && avg.domination_holds);
        assert!(avg.steps > 0);
        assert!(avg.mean_log.unwrap().is_finite());
    }

    #[test]
    fn absorbed_start_has_no_average() {
        let avg = orbit_log_average(&BigUint::one(), 100, 3).unwrap();
        assert_eq!(avg.steps, 0);
        assert_eq!(avg.mean_log, None);
        assert!(orbit_log_average(&BigUint::zero(), 1, 3).is_err());
    }

    #[test]
    fn orbit_through_n_min_keeps_domination() {
        // 3 → 16 → 2: the first step sits exactly on the bound.
        let avg = orbit_log_average(&BigUint::from(3u32), 100, 3).unwrap();
        assert_eq!(avg.steps, 2);
        assert!(avg.domination_holds);
    }

    #[test]
    fn report_serializes() {
        let r = contraction_report(3, 1).unwrap();
        assert_eq!(r.f_raw, "3/4");
        assert_eq!(r.factors[3].bound, "16/3");
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["n_min"], 3);
    }
}
