//! Browser bindings for `collatz-chain`.
//!
//! Each export returns a JSON string; the plain `*_json` functions carry the
//! logic so they can be tested natively.

use collatz_chain::empirical::{compare_to_theory, sweep, SweepConfig};
use collatz_chain::maps::OrbitInt;
use collatz_chain::markov::build_matrix;
use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Heatmap beyond 64 states is not useful in a page.
pub const MAX_MATRIX_LEVEL: u32 = 2;
pub const MAX_SWEEP: u64 = 2_000_000;
pub const MAX_ORBIT_STEPS: usize = 100_000;

fn is_absorbed(n: &BigUint) -> bool {
    matches!(n.to_u64(), Some(1 | 2 | 4))
}

/// Nonzero entries of Q(level) as `[row, col, "p/q", value]`.
pub fn transition_matrix_json(level: u32) -> Result<String, String> {
    if level > MAX_MATRIX_LEVEL {
        return Err(format!("level {level} exceeds the demo limit of {MAX_MATRIX_LEVEL}"));
    }
    let q = build_matrix(level).map_err(|e| e.to_string())?;
    let entries: Vec<_> = q
        .rows()
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().map(move |(j, p)| json!([i, j, p.to_string(), p.to_f64()])))
        .collect();
    Ok(json!({ "level": level, "size": q.size(), "entries": entries }).to_string())
}

/// The S-orbit of `start` (a decimal string) up to the cycle {1, 2, 4},
/// with the largest T-iterate passed on the way.
pub fn orbit_json(start: &str, level: u32) -> Result<String, String> {
    let mut n: BigUint = start.trim().parse().map_err(|_| format!("not a positive integer: {start:?}"))?;
    if n == BigUint::ZERO {
        return Err("start must be positive".into());
    }
    if level == 0 || level > 4 {
        return Err("level must be between 1 and 4".into());
    }
    let modulus = BigUint::from(8u32).pow(level);
    let mut values = vec![n.to_string()];
    let mut classes = vec![(&n % &modulus).to_u64().unwrap_or(0)];
    let mut max = n.clone();
    while !is_absorbed(&n) {
        if values.len() > MAX_ORBIT_STEPS {
            return Err(format!("orbit longer than {MAX_ORBIT_STEPS} steps"));
        }
        // Step T three times so the peak between samples is not missed.
        for _ in 0..3 {
            n = n.collatz_step().map_err(|e| e.to_string())?;
            if n > max {
                max = n.clone();
            }
        }
        classes.push((&n % &modulus).to_u64().unwrap_or(0));
        values.push(n.to_string());
    }
    let log_values: Vec<f64> = values.iter().map(|v| v.len() as f64 + log10_fraction(v)).collect();
    Ok(json!({
        "level": level,
        "values": values,
        "classes": classes,
        "log10": log_values,
        "steps": values.len() - 1,
        "peak": max.to_string(),
    })
    .to_string())
}

/// `log10(v) - (digits - 1) - 1` from the leading digits, so that adding
/// the digit count gives log10(v) without parsing huge values as floats.
fn log10_fraction(v: &str) -> f64 {
    let lead: f64 = v[..v.len().min(15)].parse().unwrap_or(1.0);
    lead.log10() - (v.len().min(15) as f64)
}

/// Visit frequencies of all orbits from 1..=n_max against theory.
pub fn sweep_json(n_max: u64, level: u32) -> Result<String, String> {
    if n_max > MAX_SWEEP {
        return Err(format!("n_max above {MAX_SWEEP} is too slow for the page"));
    }
    let mut config = SweepConfig::new(n_max);
    config.level = level;
    let stats = sweep(&config).map_err(|e| e.to_string())?;
    let cmp = compare_to_theory(&stats).map_err(|e| e.to_string())?;
    Ok(cmp.to_json().to_string())
}

#[wasm_bindgen]
pub fn transition_matrix(level: u32) -> Result<String, JsValue> {
    transition_matrix_json(level).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn orbit(start: &str, level: u32) -> Result<String, JsValue> {
    orbit_json(start, level).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sweep_histogram(n_max: u32, level: u32) -> Result<String, JsValue> {
    sweep_json(n_max.into(), level).map_err(|e| JsValue::from_str(&e))
}
