//! The extreme-classification repository text format:
//!
//! ```text
//! num_examples num_features num_labels
//! l1,l2,... f1:v1 f2:v2 ...
//! ```
//!
//! Label and feature indices are 0-based. A line starting with whitespace
//! (or whose first token contains `:`) has no labels.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Example, SparseDataset};
use crate::error::{Error, Result};
use crate::labels::SparseLabels;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_header(line: &str) -> Result<(usize, usize, usize)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(parse_err(1, format!("header needs 3 fields, found {}", fields.len())));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| parse_err(1, format!("bad header field {s:?}: {e}")));
    Ok((num(fields[0])?, num(fields[1])?, num(fields[2])?))
}

fn parse_example(text: &str, lineno: usize, num_features: usize, num_labels: usize) -> Result<Example> {
    let mut tokens = text.split_whitespace().peekable();
    let mut labels = Vec::new();
    let starts_with_labels = !text.starts_with(char::is_whitespace);
    if starts_with_labels {
        if let Some(first) = tokens.peek().copied().filter(|t| !t.contains(':')) {
            tokens.next();
            for part in first.split(',').filter(|p| !p.is_empty()) {
                let label = part
                    .parse::<usize>()
                    .map_err(|e| parse_err(lineno, format!("bad label {part:?}: {e}")))?;
                if label >= num_labels {
                    return Err(Error::Validation(format!(
                        "line {lineno}: label {label} out of range for {num_labels} labels"
                    )));
                }
                labels.push(label);
            }
        }
    }
    let mut features = Vec::new();
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(lineno, format!("expected index:value, found {tok:?}")))?;
        let idx = idx.parse::<usize>().map_err(|e| parse_err(lineno, format!("bad feature index {idx:?}: {e}")))?;
        let val = val.parse::<f64>().map_err(|e| parse_err(lineno, format!("bad feature value {val:?}: {e}")))?;
        if idx >= num_features {
            return Err(Error::Validation(format!(
                "line {lineno}: feature index {idx} out of range for {num_features} features"
            )));
        }
        features.push((idx, val));
    }
    let labels = SparseLabels::new(labels, num_labels).map_err(|e| parse_err(lineno, e.to_string()))?;
    Ok(Example { features, labels })
}

/// Parses the repository format from any reader.
pub fn parse_xmc<R: BufRead>(reader: R) -> Result<SparseDataset> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "missing header"))??;
    let (n, num_features, num_labels) = parse_header(&header)?;
    let mut examples = Vec::with_capacity(n);
    for (offset, line) in lines.enumerate() {
        let line = line?;
        let lineno = offset + 2;
        if examples.len() == n {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::Validation(format!("line {lineno}: more examples than the declared {n}")));
        }
        examples.push(parse_example(&line, lineno, num_features, num_labels)?);
    }
    if examples.len() != n {
        return Err(Error::Validation(format!("header declares {n} examples, found {}", examples.len())));
    }
    SparseDataset::new(num_features, num_labels, examples).map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("{msg} (example rows start at line 2)")),
        other => other,
    })
}

pub fn load_xmc(path: impl AsRef<Path>) -> Result<SparseDataset> {
    parse_xmc(BufReader::new(File::open(path)?))
}

/// Writes `ds` in the repository format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_xmc<W: Write>(ds: &SparseDataset, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    writeln!(w, "{} {} {}", ds.num_examples(), ds.num_features(), ds.num_labels())?;
    for e in ds.examples() {
        let labels: Vec<String> = e.labels.iter().map(|i| i.to_string()).collect();
        write!(w, "{}", labels.join(","))?;
        for &(f, v) in &e.features {
            write!(w, " {f}:{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_examples() {
        let text = "2 3 4\n0,2 0:1.0 2:0.5\n 1:2.0\n";
        let ds = parse_xmc(text.as_bytes()).unwrap();
        assert_eq!(ds.examples()[0].labels.indices(), &[0, 2]);
        assert_eq!(ds.examples()[0].features, vec![(0, 1.0), (2, 0.5)]);
        assert!(ds.examples()[1].labels.is_empty());
        assert_eq!(ds.examples()[1].features, vec![(1, 2.0)]);
    }

    #[test]
    fn reports_errors_with_lines() {
        let bad_feature = parse_xmc("1 3 4\n0 3:1.0\n".as_bytes()).unwrap_err();
        assert!(matches!(bad_feature, Error::Validation(ref m) if m.contains("line 2")));
        let malformed = parse_xmc("2 3 4\n0 1:1.0\n1 x\n".as_bytes()).unwrap_err();
        assert!(matches!(malformed, Error::Parse { line: 3, .. }));
        assert!(matches!(parse_xmc("2 3\n".as_bytes()).unwrap_err(), Error::Parse { line: 1, .. }));
        assert!(parse_xmc("3 3 4\n0 1:1\n".as_bytes()).is_err());
        assert!(parse_xmc("1 3 4\n5 1:1\n".as_bytes()).is_err());
    }

    #[test]
    fn round_trip() {
        let text = "3 5 4\n0,3 0:0.1 4:1e-7\n 2:3.5\n1\n";
        let ds = parse_xmc(text.as_bytes()).unwrap();
        let mut out = Vec::new();
        write_xmc(&ds, &mut out).unwrap();
        assert_eq!(parse_xmc(out.as_slice()).unwrap(), ds);
    }
}
