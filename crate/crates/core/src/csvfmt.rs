//! Locale-free CSV formatting for reals.
//!
//! Reals are written with the shortest decimal string that parses back to the
//! identical `f64` (at most 17 significant digits), in positional notation for
//! moderate magnitudes and scientific notation otherwise.

use std::fmt::Write;

pub fn real(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Joins already formatted fields into one CSV line (no trailing newline).
pub fn line<I, S>(fields: I) -> String
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = String::new();
    for (i, f) in fields.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", f.as_ref());
    }
    out
}
