//! Number formatting shared by the text, CSV and JSON emitters.

/// Formats `x` with `digits` significant digits in plain decimal notation.
pub fn significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding can carry into a new leading digit (9.99… → 10.0…).
    let carried = s.trim_start_matches(['-', '0', '.']);
    let sig = carried.chars().filter(char::is_ascii_digit).count();
    if decimals > 0 && sig > digits {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}
