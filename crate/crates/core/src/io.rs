//! Shared helpers for the CSV and JSON outputs.

/// Shortest round-trip representation; switches to exponent form for very
/// large or small magnitudes so tail probabilities stay compact.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}
