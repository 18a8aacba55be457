//! Text formats: numeric formatting and propensity files.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::labels::Propensities;

/// Formats `v` with 17 significant digits, enough to round-trip any `f64`.
/// The exponent always carries a sign, as in `1.0000000000000000e+0`.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        let s = format!("{v:.16e}");
        match s.split_once('e') {
            Some((mantissa, exp)) if !exp.starts_with('-') => format!("{mantissa}e+{exp}"),
            _ => s,
        }
    } else {
        v.to_string()
    }
}

/// Writes one `label<TAB>propensity` line per label.
pub fn write_propensities<W: Write>(p: &Propensities, mut w: W) -> Result<()> {
    for (j, v) in p.as_slice().iter().enumerate() {
        writeln!(w, "{j}\t{}", format_f64(*v))?;
    }
    Ok(())
}

/// Reads a propensity file. Labels may appear in any order but must cover
/// `0..n` exactly once; blank lines and `#` comments are ignored.
pub fn read_propensities<R: BufRead>(r: R) -> Result<Propensities> {
    let mut entries = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let lineno = i + 1;
        let err = |msg: String| Error::Parse { line: lineno, msg };
        let (label, value) = text
            .split_once('\t')
            .or_else(|| text.split_once(char::is_whitespace))
            .ok_or_else(|| err(format!("expected label<TAB>propensity, found {text:?}")))?;
        let label: usize = label.trim().parse().map_err(|e| err(format!("bad label {label:?}: {e}")))?;
        let value: f64 = value.trim().parse().map_err(|e| err(format!("bad propensity {value:?}: {e}")))?;
        entries.push((label, value, lineno));
    }
    let n = entries.len();
    let mut p = vec![f64::NAN; n];
    for (label, value, lineno) in entries {
        if label >= n || !p[label].is_nan() {
            return Err(Error::Validation(format!(
                "line {lineno}: label {label} duplicated or outside 0..{n}"
            )));
        }
        p[label] = value;
    }
    Propensities::new(p)
}
