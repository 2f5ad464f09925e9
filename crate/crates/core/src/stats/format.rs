//! Journal-style number rendering: two decimals, no leading zero.

use super::Descriptives;

/// Fixed-point with the leading zero dropped: `-0.92` → `-.92`, `1.06` stays.
pub fn format_stat(value: f64, decimals: usize) -> String {
    let mut s = format!("{value:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        // negative values that round to zero
        s.remove(0);
    }
    if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else {
        s
    }
}

/// `M (SD)`, with `n/a` for an undefined SD.
pub fn format_m_sd(d: &Descriptives) -> String {
    let sd = d.sd.map_or_else(|| "n/a".to_owned(), |sd| format_stat(sd, 2));
    format!("{} ({sd})", format_stat(d.mean, 2))
}

pub fn format_u(u: f64) -> String {
    format!("{u:.1}")
}

pub fn format_r(r: f64) -> String {
    format_stat(r, 2)
}

/// `<.01*` below .01, otherwise two decimals, starred below .05.
pub fn format_p(p: f64) -> String {
    if p < 0.01 {
        "<.01*".to_owned()
    } else if p < 0.05 {
        format!("{}*", format_stat(p, 2))
    } else {
        format_stat(p, 2)
    }
}
