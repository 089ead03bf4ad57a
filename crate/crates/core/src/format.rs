//! Fixed-width decimal output for files meant to be diffed.

/// Formats `x` with 17 significant digits in scientific notation.
///
/// The output is a valid JSON number and round-trips every `f64`.
pub fn sig17(x: f64) -> String {
    if x == 0.0 {
        // keeps -0.0 and 0.0 textually identical
        return "0.0000000000000000e0".to_string();
    }
    format!("{x:.16e}")
}

pub fn csv_row(values: &[f64]) -> String {
    values
        .iter()
        .map(|&v| sig17(v))
        .collect::<Vec<_>>()
        .join(",")
}
