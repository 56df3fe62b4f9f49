//! Transition matrices `Q(m)` of the residue-class Markov chain, their
//! stationary distributions, powers and ergodicity.
//!
//! Row `i` of `Q(m)` is the law of the level-`m` class of `S(n)` for `n`
//! drawn from `B(i, 8^m)` under the invariant measure. Splitting `B(i, 8^m)`
//! into its eight subclasses one level finer shows that every entry has the
//! form `N_ij / 8` with `N_ij ∈ {1, 2, 4}`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::congruence::{forward_split, preimage_class, preimage_union, CongruenceClass};
use crate::error::{Error, Result};
use crate::measure::{measure_class, ratio, Rational};

/// Largest level `build_matrix` accepts without an explicit override.
pub const DEFAULT_MAX_MATRIX_LEVEL: u32 = 5;
/// Dense exact matrices are only materialised up to this level (64 × 64).
pub const MAX_DENSE_LEVEL: u32 = 2;
/// Boolean positivity search is limited to 512 states.
pub const MAX_ERGODICITY_LEVEL: u32 = 3;
/// The measure-quotient construction enumerates preimages; keep it small.
pub const MAX_MEASURE_ROUTE_LEVEL: u32 = 3;

pub const POWER_ITERATION_TOLERANCE: f64 = 1e-12;
const POWER_ITERATION_MAX_STEPS: usize = 100_000;

fn state_count(level: u32) -> usize {
    1usize << (3 * level)
}

fn check_level(what: &'static str, level: u32, max: u32) -> Result<()> {
    if level == 0 {
        return Err(Error::Domain("chain level must be at least 1".into()));
    }
    if level > max {
        return Err(Error::Capacity { what, level, max });
    }
    Ok(())
}

/// Sparse exact stochastic matrix on the `8^level` classes of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    level: u32,
    rows: Vec<Vec<(usize, Rational)>>,
}

impl TransitionMatrix {
    /// Wraps explicit rows; entries must be positive, in range and sorted by column.
    pub fn from_rows(level: u32, rows: Vec<Vec<(usize, Rational)>>) -> Result<Self> {
        if level == 0 {
            return Err(Error::Domain("chain level must be at least 1".into()));
        }
        let n = state_count(level);
        if rows.len() != n {
            return Err(Error::Domain(format!("expected {n} rows, got {}", rows.len())));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.windows(2).any(|w| w[0].0 >= w[1].0) || row.iter().any(|(j, _)| *j >= n) {
                return Err(Error::Domain(format!("row {i} has unsorted or out-of-range columns")));
            }
            if row.iter().any(|(_, p)| !p.is_positive()) {
                return Err(Error::Domain(format!("row {i} stores a non-positive entry")));
            }
        }
        Ok(Self { level, rows })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<(usize, Rational)>] {
        &self.rows
    }

    pub fn entry(&self, i: usize, j: usize) -> Rational {
        self.rows[i]
            .binary_search_by_key(&j, |(c, _)| *c)
            .map(|k| self.rows[i][k].1.clone())
            .unwrap_or_else(|_| Rational::zero())
    }

    pub fn nonzero_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row_sum(&self, i: usize) -> Rational {
        self.rows[i].iter().fold(Rational::zero(), |acc, (_, p)| acc + p)
    }

    pub fn is_stochastic(&self) -> bool {
        (0..self.size()).all(|i| self.row_sum(i).is_one())
    }

    /// `N_ij = 8·q_ij` when every stored entry is one of 1/8, 1/4, 1/2.
    pub fn transition_counts(&self) -> Option<Vec<Vec<(usize, u32)>>> {
        let eight = Rational::from_integer(BigInt::from(8));
        self.rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|(j, p)| {
                        let n = p * &eight;
                        n.is_integer()
                            .then(|| n.to_integer().to_u32())
                            .flatten()
                            .filter(|c| matches!(c, 1 | 2 | 4))
                            .map(|c| (*j, c))
                    })
                    .collect()
            })
            .collect()
    }

    /// Row vector times matrix, exactly.
    pub fn left_multiply(&self, weights: &[Rational]) -> Vec<Rational> {
        let mut out = vec![Rational::zero(); self.size()];
        for (row, w) in self.rows.iter().zip(weights) {
            if w.is_zero() {
                continue;
            }
            for (j, p) in row {
                out[*j] += w * p;
            }
        }
        out
    }

    pub fn left_multiply_f64(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        for (row, w) in self.rows.iter().zip(weights) {
            for (j, p) in row {
                out[*j] += w * p.to_f64().unwrap_or(0.0);
            }
        }
        out
    }

    pub fn to_dense(&self) -> Result<DenseMatrix> {
        check_level("dense matrix", self.level, MAX_DENSE_LEVEL)?;
        let n = self.size();
        let mut dense = DenseMatrix::zeros(n);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, p) in row {
                dense.data[i * n + j] = p.clone();
            }
        }
        Ok(dense)
    }
}

/// Builds `Q(level)` from the forward split of every class.
pub fn build_matrix(level: u32) -> Result<TransitionMatrix> {
    build_matrix_capped(level, DEFAULT_MAX_MATRIX_LEVEL)
}

pub fn build_matrix_capped(level: u32, max_level: u32) -> Result<TransitionMatrix> {
    check_level("transition matrix", level, max_level)?;
    let eighth = ratio(1, 8);
    let rows = (0..state_count(level) as u64)
        .into_par_iter()
        .map(|i| {
            let class = CongruenceClass::new(i, level).expect("i < 8^level");
            let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
            for (_, image) in forward_split(&class) {
                let j = image.residue_u64().expect("level-m residues fit in u64") as usize;
                *counts.entry(j).or_default() += 1;
            }
            counts
                .into_iter()
                .map(|(j, c)| (j, &eighth * BigInt::from(c)))
                .collect()
        })
        .collect();
    Ok(TransitionMatrix { level, rows })
}

/// Builds `Q(level)` straight from `q_ij = μ[B(i) ∩ S⁻¹B(j)] / μ[B(i)]`.
pub fn build_matrix_from_measure(level: u32) -> Result<TransitionMatrix> {
    check_level("measure-quotient matrix", level, MAX_MEASURE_ROUTE_LEVEL)?;
    let n = state_count(level);
    let mut rows: Vec<BTreeMap<usize, Rational>> = vec![BTreeMap::new(); n];
    for j in 0..n {
        let target = CongruenceClass::new(j as u64, level)?;
        accumulate_restricted(&mut rows, level, j, preimage_class(&target).members());
    }
    Ok(TransitionMatrix {
        level,
        rows: rows.into_iter().map(|r| r.into_iter().collect()).collect(),
    })
}

/// Adds `μ[B(i) ∩ C] / μ[B(i)]` to entry `(i, j)` for each fine class `C`.
fn accumulate_restricted(
    rows: &mut [BTreeMap<usize, Rational>],
    level: u32,
    j: usize,
    members: &[CongruenceClass],
) {
    let mask = state_count(level) as u64 - 1;
    for member in members {
        let l = member.residue_u64().expect("fine residues fit in u64");
        let i = (l & mask) as usize;
        let coarse = CongruenceClass::new(i as u64, level).expect("masked residue");
        let share = measure_class(member) / measure_class(&coarse);
        *rows[i].entry(j).or_insert_with(Rational::zero) += share;
    }
}

/// Dense exact square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    size: usize,
    data: Vec<Rational>,
}

impl DenseMatrix {
    pub fn zeros(size: usize) -> Self {
        Self { size, data: vec![Rational::zero(); size * size] }
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Self::zeros(size);
        for i in 0..size {
            m.data[i * size + i] = Rational::one();
        }
        m
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[Rational] {
        &self.data[i * self.size..(i + 1) * self.size]
    }

    pub fn min_entry(&self) -> Option<&Rational> {
        self.data.iter().min()
    }

    pub fn mul(&self, other: &DenseMatrix) -> DenseMatrix {
        let n = self.size;
        assert_eq!(n, other.size, "dimension mismatch");
        let data = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut row = vec![Rational::zero(); n];
                for k in 0..n {
                    let a = self.get(i, k);
                    if a.is_zero() {
                        continue;
                    }
                    for (j, cell) in row.iter_mut().enumerate() {
                        let b = other.get(k, j);
                        if !b.is_zero() {
                            *cell += a * b;
                        }
                    }
                }
                row
            })
            .collect();
        DenseMatrix { size: n, data }
    }
}

/// Exact `Q^k` for `k ≥ 1`.
pub fn matrix_power(q: &TransitionMatrix, k: u32) -> Result<DenseMatrix> {
    if k == 0 {
        return Err(Error::Domain("matrix power exponent must be at least 1".into()));
    }
    let base = q.to_dense()?;
    let mut acc = base.clone();
    for _ in 1..k {
        acc = acc.mul(&base);
    }
    Ok(acc)
}

/// `μ[B(i) ∩ S^(-k) B(j)] / μ[B(i)]` for all classes `i, j` of one level,
/// obtained by pulling every target class back `k` times.
pub fn k_step_from_measure(level: u32, k: u32) -> Result<DenseMatrix> {
    check_level("k-step measure matrix", level, MAX_DENSE_LEVEL)?;
    if k == 0 {
        return Err(Error::Domain("step count must be at least 1".into()));
    }
    if level + k > 5 {
        return Err(Error::Capacity { what: "k-step preimage", level: level + k, max: 5 });
    }
    let n = state_count(level);
    let mut rows: Vec<BTreeMap<usize, Rational>> = vec![BTreeMap::new(); n];
    for j in 0..n {
        let mut pulled = preimage_class(&CongruenceClass::new(j as u64, level)?);
        for _ in 1..k {
            pulled = preimage_union(&pulled);
        }
        accumulate_restricted(&mut rows, level, j, pulled.members());
    }
    let mut dense = DenseMatrix::zeros(n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, p) in row {
            dense.data[i * n + j] = p;
        }
    }
    Ok(dense)
}

/// A probability vector over the classes of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    level: u32,
    weights: Vec<Rational>,
}

impl Distribution {
    pub fn new(level: u32, weights: Vec<Rational>) -> Result<Self> {
        if level == 0 || weights.len() != state_count(level) {
            return Err(Error::Domain("distribution length must be 8^level".into()));
        }
        if weights.iter().any(Signed::is_negative) {
            return Err(Error::Domain("distribution weights must be non-negative".into()));
        }
        if !weights.iter().fold(Rational::zero(), |a, w| a + w).is_one() {
            return Err(Error::Domain("distribution weights must sum to 1".into()));
        }
        Ok(Self { level, weights })
    }

    /// `(a, b, a, b, …)` with `a = 1/(6·8^(m-1))`, `b = 1/(12·8^(m-1))`.
    pub fn alternating(level: u32) -> Result<Self> {
        check_level("stationary distribution", level, DEFAULT_MAX_MATRIX_LEVEL + 2)?;
        let scale = BigInt::from(1u64 << (3 * (level - 1)));
        let a = Rational::new(BigInt::one(), &scale * 6);
        let b = Rational::new(BigInt::one(), &scale * 12);
        let weights = (0..state_count(level))
            .map(|i| if i % 2 == 0 { a.clone() } else { b.clone() })
            .collect();
        Self::new(level, weights)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn weights(&self) -> &[Rational] {
        &self.weights
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerIteration {
    pub estimate: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm distance between the estimate and the exact distribution.
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stationary {
    pub distribution: Distribution,
    pub power_iteration: PowerIteration,
}

/// Verifies `P·Q = P` exactly for the alternating vector and cross-checks
/// it with floating-point power iteration from the uniform vector.
pub fn stationary_distribution(q: &TransitionMatrix) -> Result<Stationary> {
    let candidate = Distribution::alternating(q.level())?;
    if q.left_multiply(candidate.weights()) != candidate.weights() {
        return Err(Error::Inconsistent(format!(
            "alternating vector is not left-invariant for Q({})",
            q.level()
        )));
    }
    let exact = candidate.to_f64();
    let power_iteration = power_iterate(q, &exact);
    Ok(Stationary { distribution: candidate, power_iteration })
}

fn power_iterate(q: &TransitionMatrix, exact: &[f64]) -> PowerIteration {
    let n = q.size();
    let mut v = vec![1.0 / n as f64; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < POWER_ITERATION_MAX_STEPS {
        let next = q.left_multiply_f64(&v);
        iterations += 1;
        let diff = max_abs_diff(&next, &v);
        v = next;
        if diff < POWER_ITERATION_TOLERANCE {
            converged = true;
            break;
        }
    }
    let max_deviation = max_abs_diff(&v, exact);
    PowerIteration { estimate: v, iterations, converged, max_deviation }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Column-lumps `Q(m)` onto residues mod 8, averaging the rows of each
/// base residue with stationary weights; the result is an 8 × 8 matrix.
pub fn lump_to_base(q: &TransitionMatrix, stationary: &Distribution) -> DenseMatrix {
    let mut num = DenseMatrix::zeros(8);
    let mut mass = vec![Rational::zero(); 8];
    for (i, row) in q.rows().iter().enumerate() {
        let w = &stationary.weights()[i];
        mass[i % 8] += w;
        for (j, p) in row {
            num.data[(i % 8) * 8 + j % 8] += w * p;
        }
    }
    for (row, m) in num.data.chunks_mut(8).zip(&mass) {
        for x in row {
            *x = &*x / m;
        }
    }
    num
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ergodicity {
    /// Every entry of `Q^exponent` is strictly positive.
    Ergodic { exponent: usize },
    /// No all-positive power up to `searched`.
    Inconclusive { searched: usize },
}

impl Ergodicity {
    pub fn is_ergodic(&self) -> bool {
        matches!(self, Ergodicity::Ergodic { .. })
    }
}

/// Searches for a strictly positive power of `q`, up to `bound`
/// (default `2·8^level`), on the zero pattern alone.
pub fn check_ergodicity(q: &TransitionMatrix, bound: Option<usize>) -> Result<Ergodicity> {
    check_level("ergodicity search", q.level(), MAX_ERGODICITY_LEVEL)?;
    let n = q.size();
    let bound = bound.unwrap_or(2 * n);
    let words = n.div_ceil(64);
    let pattern: Vec<Vec<u64>> = q
        .rows()
        .iter()
        .map(|row| {
            let mut bits = vec![0u64; words];
            for (j, _) in row {
                bits[j / 64] |= 1 << (j % 64);
            }
            bits
        })
        .collect();
    let full = |bits: &[u64]| (0..n).all(|j| bits[j / 64] >> (j % 64) & 1 == 1);
    let mut reach = pattern.clone();
    for exponent in 1..=bound {
        if reach.iter().all(|r| full(r)) {
            return Ok(Ergodicity::Ergodic { exponent });
        }
        reach = reach
            .iter()
            .map(|r| {
                let mut next = vec![0u64; words];
                for k in (0..n).filter(|&k| r[k / 64] >> (k % 64) & 1 == 1) {
                    for (w, p) in next.iter_mut().zip(&pattern[k]) {
                        *w |= p;
                    }
                }
                next
            })
            .collect();
    }
    Ok(Ergodicity::Inconclusive { searched: bound })
}

fn node_label(i: usize, modulus: usize) -> String {
    format!("B({i},{modulus})")
}

/// Graphviz description of the chain: one node per class, one weighted
/// edge per nonzero transition. Levels above 1 need `force`.
pub fn emit_chain_graph(q: &TransitionMatrix, force: bool) -> Result<String> {
    if q.level() > 1 && !force {
        return Err(Error::Domain(format!(
            "graph output for level {} has {} nodes; pass force to emit it anyway",
            q.level(),
            q.size()
        )));
    }
    let modulus = q.size();
    let mut out = String::new();
    writeln!(out, "digraph collatz_chain {{").unwrap();
    writeln!(out, "  // level {}: {} nodes, {} edges", q.level(), modulus, q.nonzero_count()).unwrap();
    for i in 0..modulus {
        writeln!(out, "  \"{}\";", node_label(i, modulus)).unwrap();
    }
    for (i, row) in q.rows().iter().enumerate() {
        for (j, p) in row {
            let width = 8.0 * p.to_f64().unwrap_or(0.0);
            writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\", weight=\"{}\", penwidth={:.1}];",
                node_label(i, modulus),
                node_label(*j, modulus),
                p,
                p,
                width
            )
            .unwrap();
        }
    }
    writeln!(out, "}}").unwrap();
    Ok(out)
}
