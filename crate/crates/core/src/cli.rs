//! The `collatz` command line.
//!
//! Results go to `out`, diagnostics to `err`. Exit status: 0 success,
//! 1 a check failed, 2 usage error, 3 capacity or overflow error.

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigUint;

use crate::congruence::{preimage_class, CongruenceClass};
use crate::contraction::{
    contraction_report, dominate, orbit_log_average, ContractionReport, Domination, DEFAULT_N_MIN,
};
use crate::empirical::{compare_to_theory_weighted, sweep, Arithmetic, SweepConfig, Weighting};
use crate::error::Error;
use crate::format::significant;
use crate::markov::{
    build_matrix, build_matrix_capped, build_matrix_from_measure, check_ergodicity, emit_chain_graph,
    k_step_from_measure, matrix_power, stationary_distribution, Ergodicity, DEFAULT_MAX_MATRIX_LEVEL,
    MAX_ERGODICITY_LEVEL, POWER_ITERATION_TOLERANCE,
};
use crate::measure::{check_invariance_capped, DEFAULT_MAX_INVARIANCE_LEVEL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;

/// Largest level reachable with --allow-large.
const LARGE_LEVEL: u32 = 7;

#[derive(Debug, Parser)]
#[command(
    name = "collatz",
    version,
    about = "Residue-class Markov chain analysis of the third iterate of the Collatz map"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct LevelArg {
    /// Class level m; states are the residues mod 8^m
    #[arg(long = "m", default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    m: u32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MatrixFormat {
    Triplets,
    Dense,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TableFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print Q(m), q_ij = μ[B(i,8^m) ∩ S⁻¹B(j,8^m)] / μ[B(i,8^m)], as exact `row col p/q` lines
    Matrix {
        #[command(flatten)]
        level: LevelArg,
        #[arg(long, value_enum, default_value = "triplets")]
        format: MatrixFormat,
        /// Permit levels above the default cap
        #[arg(long)]
        allow_large: bool,
    },
    /// Print the stationary vector P·Q(m) = P, (a, b, a, b, …) with a = 1/(6·8^(m-1)), b = 1/(12·8^(m-1))
    Stationary {
        #[command(flatten)]
        level: LevelArg,
    },
    /// Print S⁻¹B(j, 8^m) as classes mod 8^(m+1), solving m_i·h ≡ j − x_i (mod 8^m), with the A_e/A_o counts
    Preimage {
        #[arg(long = "j")]
        j: u64,
        #[command(flatten)]
        level: LevelArg,
    },
    /// Contraction factors c_i(n_min) with S(n) < c_i·n, the weighted means f = 3/4 and f ≤ Π c_k^Ω_k, and α, β = e^(α/2)
    Contraction {
        #[arg(long, default_value_t = DEFAULT_N_MIN, value_parser = clap::value_parser!(u64).range(1..))]
        n_min: u64,
        #[command(flatten)]
        level: LevelArg,
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Sweep n0 = 1..=max and compare the class-visit frequencies before {1,2,4} with the stationary distribution
    Simulate {
        #[arg(long = "max", value_parser = clap::value_parser!(u64).range(5..))]
        max: u64,
        #[command(flatten)]
        level: LevelArg,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        include_start: bool,
        #[arg(long, value_enum, default_value = "csv")]
        format: TableFormat,
        /// Weight every trajectory equally instead of every visit
        #[arg(long)]
        per_trajectory: bool,
        /// Track the maximum only at S-samples, not every T-iterate
        #[arg(long)]
        samples_only: bool,
        /// Iterate in arbitrary precision from the start
        #[arg(long)]
        arbitrary_precision: bool,
    },
    /// Run exact checks: μ(S⁻¹B) = μ(B), row sums of Q(m), P·Q = P, q^(k) = Q^k, positivity of Q², S(n) ≤ c_i·n
    Verify {
        #[command(flatten)]
        level: LevelArg,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        measure: bool,
        #[arg(long)]
        stochastic: bool,
        #[arg(long)]
        stationary: bool,
        #[arg(long)]
        chapman_kolmogorov: bool,
        #[arg(long)]
        ergodic: bool,
        #[arg(long)]
        domination: bool,
        /// Permit levels above the default caps
        #[arg(long)]
        allow_large: bool,
    },
    /// Emit the chain as a Graphviz digraph with one weighted edge per nonzero q_ij
    Graph {
        #[command(flatten)]
        level: LevelArg,
        /// Emit levels above 1 anyway
        #[arg(long)]
        force: bool,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Capacity { .. } | Error::Overflow { .. } | Error::StepCapExceeded { .. } | Error::Trajectory { .. } => {
            EXIT_CAPACITY
        }
        Error::Inconsistent(_) => EXIT_CHECK_FAILED,
        Error::Domain(_) | Error::NonPositive => EXIT_USAGE,
    }
}

enum Failure {
    Lib(Error),
    Io(std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Parses `args` (program name first) and runs the chosen subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(Failure::Lib(e)) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
        Err(Failure::Io(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_CAPACITY
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> CmdResult {
    match command {
        Command::Matrix { level, format, allow_large } => matrix(level.m, format, allow_large, out),
        Command::Stationary { level } => stationary(level.m, out),
        Command::Preimage { j, level } => preimage(j, level.m, out),
        Command::Contraction { n_min, level, format } => contraction(n_min, level.m, format, out),
        Command::Simulate { max, level, include_start, format, per_trajectory, samples_only, arbitrary_precision } => {
            let mut config = SweepConfig::new(max);
            config.level = level.m;
            config.include_start = include_start;
            config.track_all_iterates = !samples_only;
            if arbitrary_precision {
                config.arithmetic = Arithmetic::ArbitraryPrecision;
            }
            let weighting = if per_trajectory { Weighting::PerTrajectory } else { Weighting::PerVisit };
            simulate(&config, weighting, format, out)
        }
        Command::Verify { level, all, measure, stochastic, stationary, chapman_kolmogorov, ergodic, domination, allow_large } => {
            let none = !(measure || stochastic || stationary || chapman_kolmogorov || ergodic || domination);
            let selection = Selection {
                measure: all || none || measure,
                stochastic: all || none || stochastic,
                stationary: all || none || stationary,
                chapman_kolmogorov: all || none || chapman_kolmogorov,
                ergodic: all || none || ergodic,
                domination: all || none || domination,
            };
            verify(level.m, &selection, allow_large, out)
        }
        Command::Graph { level, force } => {
            let q = build_matrix(level.m)?;
            write!(out, "{}", emit_chain_graph(&q, force)?)?;
            Ok(EXIT_OK)
        }
    }
}

fn matrix_cap(allow_large: bool) -> u32 {
    if allow_large { LARGE_LEVEL } else { DEFAULT_MAX_MATRIX_LEVEL }
}

fn matrix(m: u32, format: MatrixFormat, allow_large: bool, out: &mut dyn Write) -> CmdResult {
    let q = build_matrix_capped(m, matrix_cap(allow_large))?;
    match format {
        MatrixFormat::Triplets => {
            for (i, row) in q.rows().iter().enumerate() {
                for (j, p) in row {
                    writeln!(out, "{i} {j} {p}")?;
                }
            }
        }
        MatrixFormat::Dense => {
            let dense = q.to_dense()?;
            for i in 0..dense.size() {
                let line: Vec<String> = dense.row(i).iter().map(ToString::to_string).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
        }
    }
    Ok(EXIT_OK)
}

fn stationary(m: u32, out: &mut dyn Write) -> CmdResult {
    let q = build_matrix(m)?;
    let s = stationary_distribution(&q)?;
    for (i, w) in s.distribution.weights().iter().enumerate() {
        writeln!(out, "{i} {w}")?;
    }
    Ok(EXIT_OK)
}

fn preimage(j: u64, m: u32, out: &mut dyn Write) -> CmdResult {
    let target = CongruenceClass::new(j, m)?;
    let union = preimage_class(&target);
    for c in union.members() {
        writeln!(out, "{c}")?;
    }
    writeln!(out, "A_e={} A_o={}", union.even_count(), union.odd_count())?;
    Ok(EXIT_OK)
}

fn contraction_text(r: &ContractionReport, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "level   {}", r.level)?;
    writeln!(out, "n_min   {}", r.n_min)?;
    writeln!(out, "{:<6} {:>6} {:>8} {:>16}", "class", "raw", "c_i", "c_i (decimal)")?;
    for f in &r.factors {
        writeln!(out, "{:<6} {:>6} {:>8} {:>16}", f.class, f.raw, f.bound, significant(f.bound_decimal, 12))?;
    }
    writeln!(out, "f_raw   {}", r.f_raw)?;
    writeln!(out, "f_bound {}", significant(r.f_bound, 12))?;
    writeln!(out, "alpha   {}", significant(r.alpha, 12))?;
    writeln!(out, "beta    {}", significant(r.beta, 12))
}

fn contraction(n_min: u64, m: u32, format: ReportFormat, out: &mut dyn Write) -> CmdResult {
    let report = contraction_report(n_min, m)?;
    match format {
        ReportFormat::Text => contraction_text(&report, out)?,
        ReportFormat::Json => {
            let text = serde_json::to_string_pretty(&report).expect("report is plain data");
            writeln!(out, "{text}")?;
        }
    }
    Ok(EXIT_OK)
}

fn simulate(config: &SweepConfig, weighting: Weighting, format: TableFormat, out: &mut dyn Write) -> CmdResult {
    let stats = sweep(config)?;
    let cmp = compare_to_theory_weighted(&stats, weighting)?;
    match format {
        TableFormat::Csv => write!(out, "{}", cmp.to_csv())?,
        TableFormat::Json => {
            let mut json = cmp.to_json();
            json["n_max"] = config.n_max.into();
            json["include_start"] = config.include_start.into();
            writeln!(out, "{}", serde_json::to_string_pretty(&json).expect("plain data"))?;
        }
    }
    Ok(EXIT_OK)
}

struct Selection {
    measure: bool,
    stochastic: bool,
    stationary: bool,
    chapman_kolmogorov: bool,
    ergodic: bool,
    domination: bool,
}

struct Tally<'a> {
    out: &'a mut dyn Write,
    failed: usize,
    passed: usize,
}

impl Tally<'_> {
    fn record(&mut self, ok: bool, line: std::fmt::Arguments<'_>) -> std::io::Result<()> {
        if ok { self.passed += 1 } else { self.failed += 1 }
        writeln!(self.out, "{} {}", if ok { "PASS" } else { "FAIL" }, line)
    }
}

fn verify(m: u32, sel: &Selection, allow_large: bool, out: &mut dyn Write) -> CmdResult {
    let mut tally = Tally { out, failed: 0, passed: 0 };
    if sel.measure {
        let cap = if allow_large { LARGE_LEVEL } else { DEFAULT_MAX_INVARIANCE_LEVEL };
        let report = check_invariance_capped(m, cap)?;
        for e in &report.entries {
            if e.passed() {
                tally.record(true, format_args!("measure {} = {}", e.class, e.class_measure))?;
            } else {
                tally.record(
                    false,
                    format_args!("measure {}: preimage {} != class {}", e.class, e.preimage_measure, e.class_measure),
                )?;
            }
        }
    }
    let needs_matrix = sel.stochastic || sel.stationary || sel.ergodic;
    let q = if needs_matrix { Some(build_matrix_capped(m, matrix_cap(allow_large))?) } else { None };
    if sel.stochastic {
        let q = q.as_ref().expect("built above");
        tally.record(q.is_stochastic(), format_args!("stochastic Q({m}): every row sums to 1"))?;
        tally.record(
            q.transition_counts().is_some(),
            format_args!("entries of Q({m}) are N/8 with N in {{1,2,4}}"),
        )?;
        if m <= 2 {
            let same = build_matrix_from_measure(m)? == *q;
            tally.record(same, format_args!("forward split and measure quotient give the same Q({m})"))?;
        }
    }
    if sel.stationary {
        let q = q.as_ref().expect("built above");
        match stationary_distribution(q) {
            Ok(s) => {
                tally.record(true, format_args!("stationary P(m)·Q({m}) = P(m) exactly"))?;
                let p = &s.power_iteration;
                tally.record(
                    p.converged && p.max_deviation <= POWER_ITERATION_TOLERANCE,
                    format_args!(
                        "power iteration Q({m}): {} steps, max deviation {:e}",
                        p.iterations, p.max_deviation
                    ),
                )?;
            }
            Err(Error::Inconsistent(msg)) => tally.record(false, format_args!("stationary: {msg}"))?,
            Err(e) => return Err(e.into()),
        }
    }
    if sel.chapman_kolmogorov {
        let level = m.min(2);
        let q = build_matrix(level)?;
        for k in 2..=3 {
            let ok = k_step_from_measure(level, k)? == matrix_power(&q, k)?;
            tally.record(ok, format_args!("chapman-kolmogorov level {level}: q^({k}) = Q^{k}"))?;
        }
    }
    if sel.ergodic {
        let level = m.min(MAX_ERGODICITY_LEVEL);
        let q = if level == m { q.clone().expect("built above") } else { build_matrix(level)? };
        match check_ergodicity(&q, None)? {
            Ergodicity::Ergodic { exponent } => {
                tally.record(true, format_args!("ergodic Q({level}): Q^{exponent} is strictly positive"))?
            }
            Ergodicity::Inconclusive { searched } => tally.record(
                false,
                format_args!("ergodic Q({level}): no strictly positive power up to {searched}"),
            )?,
        }
        if level == 1 {
            let min = matrix_power(&q, 2)?.min_entry().cloned().expect("non-empty");
            tally.record(
                min >= crate::measure::ratio(1, 16),
                format_args!("every entry of Q^2 is at least 1/16 (min {min})"),
            )?;
        }
    }
    if sel.domination {
        let mut ok = true;
        for n in DEFAULT_N_MIN..=10_000u64 {
            let d = dominate(&BigUint::from(n), DEFAULT_N_MIN)?;
            let want = if n % 8 == 0 || n == DEFAULT_N_MIN { Domination::Equal } else { Domination::Strict };
            ok &= d == want;
        }
        tally.record(ok, format_args!("S(n) < c_i(3)·n for 3 < n <= 10000 (equality on class 0 and at n = 3)"))?;
        let avg = orbit_log_average(&BigUint::from(27u32), u64::MAX, DEFAULT_N_MIN)?;
        tally.record(avg.domination_holds, format_args!("per-step domination along the orbit of 27"))?;
    }
    let (passed, failed) = (tally.passed, tally.failed);
    writeln!(tally.out, "summary: {passed} passed, {failed} failed")?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_CHECK_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut argv = vec!["collatz"];
        argv.extend_from_slice(args);
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn stationary_level_one() {
        let (code, out, _) = run_str(&["stationary", "--m", "1"]);
        assert_eq!(code, 0);
        assert_eq!(out, "0 1/6\n1 1/12\n2 1/6\n3 1/12\n4 1/6\n5 1/12\n6 1/6\n7 1/12\n");
    }

    #[test]
    fn zero_level_is_usage_error() {
        let (code, out, err) = run_str(&["stationary", "--m", "0"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(out.is_empty());
        assert!(!err.is_empty());
    }

    #[test]
    fn out_of_range_j_is_usage_error() {
        let (code, _, err) = run_str(&["preimage", "--j", "8", "--m", "1"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("out of range"));
    }

    #[test]
    fn capacity_error_exit_code() {
        let (code, _, err) = run_str(&["matrix", "--m", "6"]);
        assert_eq!(code, EXIT_CAPACITY);
        assert!(err.contains("maximum"));
        let (code, _, _) = run_str(&["matrix", "--m", "3", "--format", "dense"]);
        assert_eq!(code, EXIT_CAPACITY);
    }

    #[test]
    fn preimage_listing() {
        let (code, out, _) = run_str(&["preimage", "--j", "1", "--m", "1"]);
        assert_eq!(code, 0);
        assert_eq!(out, "B(1, 64)\nB(8, 64)\nB(22, 64)\nB(33, 64)\nB(54, 64)\nA_e=3 A_o=2\n");
    }

    #[test]
    fn matrix_triplets_and_dense() {
        let (_, out, _) = run_str(&["matrix", "--m", "1"]);
        assert_eq!(out.lines().count(), 32);
        assert!(out.contains("3 0 1/2\n3 4 1/2\n"));
        let (_, dense, _) = run_str(&["matrix", "--m", "1", "--format", "dense"]);
        assert_eq!(dense.lines().nth(7).unwrap(), "0 0 1/2 0 0 0 1/2 0");
    }

    #[test]
    fn verify_all_level_one() {
        let (code, out, _) = run_str(&["verify", "--all", "--m", "1"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("summary:"));
        assert!(!out.contains("FAIL"));
    }

    #[test]
    fn contraction_json() {
        let (code, out, _) = run_str(&["contraction", "--format", "json"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["f_raw"], "3/4");
        let (_, text, _) = run_str(&["contraction"]);
        assert!(text.contains("f_raw   3/4"));
    }

    #[test]
    fn graph_guard() {
        let (code, _, _) = run_str(&["graph", "--m", "2"]);
        assert_eq!(code, EXIT_USAGE);
        let (code, out, _) = run_str(&["graph"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("digraph"));
    }

    #[test]
    fn help_is_not_an_error() {
        let (code, out, _) = run_str(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("simulate"));
    }
}
