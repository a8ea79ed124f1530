//! Number rendering shared by the CLI, the sweep CSV and the policy file.

/// Probability with 10 significant digits; scientific notation below 1e-4.
pub fn fmt_prob(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    if v.abs() < 1e-4 {
        return format!("{v:.9e}");
    }
    let magnitude = v.abs().log10().floor() as i32;
    let decimals = (9 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Exact decimal rendering with 12 significant digits.
pub fn fmt_sig12(v: f64) -> String {
    format!("{v:.11e}")
}
