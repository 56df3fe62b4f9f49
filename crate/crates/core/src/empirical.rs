//! Brute-force sweep over starting values: class-visit frequencies of
//! S-orbits before they fall into {1, 2, 4}, and the largest value seen.

use std::fmt::Write as _;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::format::significant;
use crate::maps::OrbitInt;
use crate::markov::Distribution;
use crate::measure::Rational;

pub const DEFAULT_STEP_CAP: u64 = 1_000_000_000;
pub const MAX_SWEEP_LEVEL: u32 = 4;
/// Starting values per work unit. Fixed so float sums are merged in the
/// same order whatever the thread count.
const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arithmetic {
    /// Checked `u128`; a trajectory that overflows is redone in big integers
    /// when `fallback_on_overflow` is set, and fails otherwise.
    Checked128,
    ArbitraryPrecision,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepConfig {
    pub n_max: u64,
    pub level: u32,
    /// Record the class of the starting value itself.
    pub include_start: bool,
    pub arithmetic: Arithmetic,
    pub fallback_on_overflow: bool,
    pub step_cap: u64,
    /// Track the maximum over every T-iterate rather than only S-samples.
    pub track_all_iterates: bool,
}

impl SweepConfig {
    pub fn new(n_max: u64) -> Self {
        Self {
            n_max,
            level: 1,
            include_start: true,
            arithmetic: Arithmetic::Checked128,
            fallback_on_overflow: true,
            step_cap: DEFAULT_STEP_CAP,
            track_all_iterates: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < 5 {
            return Err(Error::Domain(format!("n_max must be at least 5, got {}", self.n_max)));
        }
        if self.level == 0 {
            return Err(Error::Domain("level must be at least 1".into()));
        }
        if self.level > MAX_SWEEP_LEVEL {
            return Err(Error::Capacity { what: "sweep histogram", level: self.level, max: MAX_SWEEP_LEVEL });
        }
        Ok(())
    }
}

/// One orbit: the recorded class residues and the largest value reached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub visits: Vec<u64>,
    pub max_value: BigUint,
    pub steps: u64,
}

#[derive(Debug, Clone, Copy)]
struct WalkOptions {
    level: u32,
    include_start: bool,
    step_cap: u64,
    track_all_iterates: bool,
}

fn absorbed<N: OrbitInt>(n: &N) -> bool {
    matches!(n.to_small(), Some(1 | 2 | 4))
}

/// Iterates `S` from `start`, reporting each recorded class to `visit`.
/// Returns the maximum value and the number of S-steps.
fn walk<N: OrbitInt>(start: N, opts: WalkOptions, mut visit: impl FnMut(u64)) -> Result<(N, u64)> {
    let mut n = start;
    let mut max = n.clone();
    let mut steps = 0u64;
    while !absorbed(&n) {
        if steps > 0 || opts.include_start {
            visit(n.residue_pow8(opts.level));
        }
        if steps == opts.step_cap {
            return Err(Error::StepCapExceeded { start: String::new(), cap: opts.step_cap });
        }
        if opts.track_all_iterates {
            let t1 = n.collatz_step()?;
            let t2 = t1.collatz_step()?;
            let t3 = t2.collatz_step()?;
            max = max.max(t1).max(t2).max(t3.clone());
            n = t3;
        } else {
            n = n.third_iterate()?;
            max = max.max(n.clone());
        }
        steps += 1;
    }
    Ok((max, steps))
}

fn options(config: &SweepConfig) -> WalkOptions {
    WalkOptions {
        level: config.level,
        include_start: config.include_start,
        step_cap: config.step_cap,
        track_all_iterates: config.track_all_iterates,
    }
}

fn attach_start(n0: u64, err: Error) -> Error {
    match err {
        Error::StepCapExceeded { cap, .. } => Error::StepCapExceeded { start: n0.to_string(), cap },
        other => Error::Trajectory { start: n0.to_string(), source: Box::new(other) },
    }
}

/// Walks one orbit under `config`, switching to big integers on overflow
/// when allowed.
fn walk_config(n0: u64, config: &SweepConfig, mut visit: impl FnMut(u64)) -> Result<(BigUint, u64)> {
    if n0 == 0 {
        return Err(Error::NonPositive);
    }
    let opts = options(config);
    let big = |visit: &mut dyn FnMut(u64)| {
        walk(BigUint::from(n0), opts, visit)
    };
    match config.arithmetic {
        Arithmetic::ArbitraryPrecision => big(&mut visit),
        Arithmetic::Checked128 => {
            let mut buffered = Vec::new();
            match walk(n0 as u128, opts, |c| buffered.push(c)) {
                Ok((m, s)) => {
                    buffered.into_iter().for_each(&mut visit);
                    Ok((BigUint::from(m), s))
                }
                Err(Error::Overflow { .. }) if config.fallback_on_overflow => big(&mut visit),
                Err(e) => Err(e),
            }
        }
    }
    .map_err(|e| attach_start(n0, e))
}

/// Runs the orbit of `n0` and records the class (mod `8^level`) of every
/// value visited before {1, 2, 4}.
pub fn run_trajectory(n0: u64, level: u32, include_start: bool) -> Result<Trajectory> {
    let mut config = SweepConfig::new(n0.max(5));
    config.level = level;
    config.include_start = include_start;
    if level == 0 || level > 21 {
        return Err(Error::Domain(format!("trajectory level must be in 1..=21, got {level}")));
    }
    let mut visits = Vec::new();
    let (max_value, steps) = walk_config(n0, &config, |c| visits.push(c))?;
    Ok(Trajectory { visits, max_value, steps })
}

/// Same as [`run_trajectory`] in arbitrary precision from any start value.
pub fn run_trajectory_big(n0: &BigUint, level: u32, include_start: bool) -> Result<Trajectory> {
    if n0.is_zero() {
        return Err(Error::NonPositive);
    }
    let opts = WalkOptions { level, include_start, step_cap: DEFAULT_STEP_CAP, track_all_iterates: true };
    let mut visits = Vec::new();
    let (max_value, steps) = walk(n0.clone(), opts, |c| visits.push(c))
        .map_err(|e| Error::Trajectory { start: n0.to_string(), source: Box::new(e) })?;
    Ok(Trajectory { visits, max_value, steps })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    pub level: u32,
    pub visit_counts: Vec<u64>,
    pub total_visits: u64,
    pub max_value: BigUint,
    pub trajectories: u64,
    /// Sum over trajectories of each one's normalised visit histogram.
    pub per_trajectory_sums: Vec<f64>,
    /// Trajectories that recorded at least one visit.
    pub nonempty_trajectories: u64,
}

impl TrajectoryStats {
    pub fn empty(level: u32) -> Self {
        let n = 1usize << (3 * level);
        Self {
            level,
            visit_counts: vec![0; n],
            total_visits: 0,
            max_value: BigUint::zero(),
            trajectories: 0,
            per_trajectory_sums: vec![0.0; n],
            nonempty_trajectories: 0,
        }
    }

    /// Adds `other` into `self`; associative, and commutative up to the
    /// order of the float sums.
    pub fn merge(&mut self, other: &TrajectoryStats) {
        assert_eq!(self.level, other.level, "cannot merge stats of different levels");
        for (a, b) in self.visit_counts.iter_mut().zip(&other.visit_counts) {
            *a += b;
        }
        for (a, b) in self.per_trajectory_sums.iter_mut().zip(&other.per_trajectory_sums) {
            *a += b;
        }
        self.total_visits += other.total_visits;
        self.trajectories += other.trajectories;
        self.nonempty_trajectories += other.nonempty_trajectories;
        if other.max_value > self.max_value {
            self.max_value = other.max_value.clone();
        }
    }

    /// Visit frequencies pooled over all trajectories.
    pub fn frequencies(&self) -> Vec<f64> {
        let total = self.total_visits.max(1) as f64;
        self.visit_counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Frequencies averaged per trajectory, each orbit weighted equally.
    pub fn per_trajectory_frequencies(&self) -> Vec<f64> {
        let n = self.nonempty_trajectories.max(1) as f64;
        self.per_trajectory_sums.iter().map(|s| s / n).collect()
    }
}

fn sweep_chunk(lo: u64, hi: u64, config: &SweepConfig) -> Result<TrajectoryStats> {
    let mut stats = TrajectoryStats::empty(config.level);
    let mut orbit = Vec::new();
    for n0 in lo..=hi {
        orbit.clear();
        let (max, _) = walk_config(n0, config, |c| orbit.push(c))?;
        for &c in &orbit {
            stats.visit_counts[c as usize] += 1;
        }
        if !orbit.is_empty() {
            let share = 1.0 / orbit.len() as f64;
            for &c in &orbit {
                stats.per_trajectory_sums[c as usize] += share;
            }
            stats.nonempty_trajectories += 1;
        }
        stats.total_visits += orbit.len() as u64;
        stats.trajectories += 1;
        if max > stats.max_value {
            stats.max_value = max;
        }
    }
    Ok(stats)
}

/// Aggregates every orbit started from `1..=n_max`.
///
/// Work is split into fixed contiguous blocks whose results are merged in
/// block order, so the output does not depend on the thread count.
pub fn sweep(config: &SweepConfig) -> Result<TrajectoryStats> {
    config.validate()?;
    let blocks = config.n_max.div_ceil(CHUNK);
    let parts: Vec<TrajectoryStats> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let lo = b * CHUNK + 1;
            let hi = ((b + 1) * CHUNK).min(config.n_max);
            sweep_chunk(lo, hi, config)
        })
        .collect::<Result<_>>()?;
    let mut total = TrajectoryStats::empty(config.level);
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub class: usize,
    pub theoretical: Rational,
    pub theoretical_decimal: f64,
    pub empirical: f64,
    pub deviation: f64,
    pub pooled: f64,
    pub per_trajectory: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub level: u32,
    pub rows: Vec<ComparisonRow>,
    pub weighting: Weighting,
    pub max_deviation: f64,
    pub max_value: BigUint,
    pub total_visits: u64,
    pub trajectories: u64,
}

/// How visits are weighted when turned into frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// Every visit counts once (pooled histogram).
    #[default]
    PerVisit,
    /// Every trajectory counts once.
    PerTrajectory,
}

/// Lines the empirical frequencies up against the stationary distribution.
pub fn compare_to_theory(stats: &TrajectoryStats) -> Result<Comparison> {
    compare_to_theory_weighted(stats, Weighting::PerVisit)
}

pub fn compare_to_theory_weighted(stats: &TrajectoryStats, weighting: Weighting) -> Result<Comparison> {
    if stats.total_visits == 0 {
        return Err(Error::Domain("no visits recorded; nothing to compare".into()));
    }
    let theory = Distribution::alternating(stats.level)?;
    let pooled = stats.frequencies();
    let per_trajectory = stats.per_trajectory_frequencies();
    let empirical = match weighting {
        Weighting::PerVisit => &pooled,
        Weighting::PerTrajectory => &per_trajectory,
    };
    let rows: Vec<ComparisonRow> = theory
        .weights()
        .iter()
        .enumerate()
        .map(|(class, w)| {
            let t = w.to_f64().unwrap_or(f64::NAN);
            ComparisonRow {
                class,
                theoretical: w.clone(),
                theoretical_decimal: t,
                empirical: empirical[class],
                deviation: (empirical[class] - t).abs(),
                pooled: pooled[class],
                per_trajectory: per_trajectory[class],
            }
        })
        .collect();
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(Comparison {
        level: stats.level,
        rows,
        weighting,
        max_deviation,
        max_value: stats.max_value.clone(),
        total_visits: stats.total_visits,
        trajectories: stats.trajectories,
    })
}

impl Comparison {
    pub const CSV_HEADER: &'static str = "class,theoretical,empirical,deviation";

    /// CSV table; the trailing comment carries the sweep totals.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}", Self::CSV_HEADER).unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.12},{},{}",
                r.class,
                r.theoretical_decimal,
                significant(r.empirical, 12),
                significant(r.deviation, 12)
            )
            .unwrap();
        }
        writeln!(out, "# max_value={} total_visits={}", self.max_value, self.total_visits).unwrap();
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let max_value = match self.max_value.to_u64() {
            Some(v) => json!(v),
            None => json!(self.max_value.to_string()),
        };
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "class": r.class,
                    "theoretical": format!("{:.12}", r.theoretical_decimal),
                    "theoretical_exact": r.theoretical.to_string(),
                    "empirical": r.empirical,
                    "deviation": r.deviation,
                    "pooled": r.pooled,
                    "per_trajectory": r.per_trajectory,
                })
            })
            .collect();
        json!({
            "level": self.level,
            "weighting": match self.weighting {
                Weighting::PerVisit => "per_visit",
                Weighting::PerTrajectory => "per_trajectory",
            },
            "rows": rows,
            "max_deviation": self.max_deviation,
            "max_value": max_value,
            "total_visits": self.total_visits,
            "trajectories": self.trajectories,
        })
    }
}
