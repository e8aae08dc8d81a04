//! Small shared helpers.

/// Full-precision float formatting for CSV output: 17 significant digits,
/// '.' decimal, round-trippable through `str::parse::<f64>()`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
