//! Small text-output helpers shared by the CSV writers.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Format `v` with `digits` significant digits, in the style of C's `%.Ng`.
pub fn fmt_sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.*e}", digits.saturating_sub(1), v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        return format!("{m}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = fs::File::open(path)
        .map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

/// Write a numeric table with a header row.
pub fn write_csv_table<W: Write>(mut w: W, header: &[&str], rows: &[Vec<f64>], digits: usize) -> Result<()> {
    writeln!(w, "{}", header.join(","))?;
    for row in rows {
        let fields: Vec<String> = row.iter().map(|v| fmt_sig(*v, digits)).collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Read a numeric CSV with a header row; returns `(header, rows)`. Lines
/// starting with `#` are skipped.
pub fn read_csv_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let f = fs::File::open(path)
        .map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(f)
        .lines()
        .filter(|l| !matches!(l, Ok(l) if l.starts_with('#')));
    let header = match lines.next() {
        Some(line) => line?.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::Parse(format!("{}: empty file", path.display()))),
    };
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{} data row {}: {e}", path.display(), n + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}
