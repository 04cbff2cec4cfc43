//! Fixed numeric formatting for emitted CSV and JSON files.

/// Significant digits kept in every emitted number.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Rounds `x` to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        // folds -0.0 into 0.0
        return if x == 0.0 { 0.0 } else { x };
    }
    let s = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let r: f64 = s.parse().expect("formatted float parses");
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Formats `x` with [`SIGNIFICANT_DIGITS`] significant digits and no trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    format!("{}", round_sig(x))
}
