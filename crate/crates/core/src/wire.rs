//! Fixed-width number formatting for the node-to-central exchange files.
//!
//! Every field is rendered as `+d.dddddddddddde+ddd` (20 bytes), so the size
//! of a transmitted profile or surface depends only on its grid sizes.

/// Bytes per formatted number.
pub const FIELD_WIDTH: usize = 20;

pub const PROFILE_HEADER: &str = "tau_s,value\n";
pub const SURFACE_HEADER: &str = "tau_s,omega_rad_s,value\n";

/// Formats `x` in 20-byte scientific notation with 12 fractional digits.
pub fn field(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x:>width$}", width = FIELD_WIDTH);
    }
    let s = format!("{:.12e}", x.abs());
    let (mantissa, exp) = s.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("exponent");
    let sign = if x.is_sign_negative() { '-' } else { '+' };
    let esign = if exp < 0 { '-' } else { '+' };
    format!("{sign}{mantissa}e{esign}{:03}", exp.abs())
}

/// Size of a delay profile CSV with `n_tau` rows.
pub fn profile_csv_bytes(n_tau: usize) -> usize {
    PROFILE_HEADER.len() + n_tau * (2 * FIELD_WIDTH + 2)
}

/// Size of an ambiguity surface CSV with `n_tau * n_omega` rows.
pub fn surface_csv_bytes(n_tau: usize, n_omega: usize) -> usize {
    SURFACE_HEADER.len() + n_tau * n_omega * (3 * FIELD_WIDTH + 3)
}
