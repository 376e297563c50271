//! TOA files and ground-truth sidecars.
//!
//! A TOA file holds one decimal number per line. Blank lines and anything
//! after `#` are ignored.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::synth::GroundTruth;

pub fn parse_toas(text: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| CliError::Parse {
            line: i + 1,
            message: format!("`{line}` is not a number"),
        })?;
        if !v.is_finite() {
            return Err(CliError::Parse {
                line: i + 1,
                message: format!("`{line}` is not finite"),
            });
        }
        out.push(v);
    }
    Ok(out)
}

pub fn read_toas(path: &Path) -> Result<Vec<f64>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_toas(&text)
}

/// Writes TOAs with round-trip precision, after optional `#` header lines.
pub fn write_toas(path: &Path, header: &[String], toas: &[f64]) -> Result<(), CliError> {
    let file =
        fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    for h in header {
        writeln!(w, "# {h}").map_err(io)?;
    }
    for t in toas {
        writeln!(w, "{t}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Sidecar path next to a TOA file.
pub fn truth_path(toa_path: &Path) -> PathBuf {
    let mut name = toa_path.as_os_str().to_owned();
    name.push(".truth.csv");
    PathBuf::from(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub index: usize,
    pub toa: f64,
    pub kind: String,
    pub x_true: Option<u64>,
}

pub fn write_truth(path: &Path, toas: &[f64], truth: &GroundTruth) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    for (index, (&toa, x)) in toas.iter().zip(&truth.x_true).enumerate() {
        w.serialize(TruthRow {
            index,
            toa,
            kind: if x.is_some() { "inlier" } else { "outlier" }.into(),
            x_true: *x,
        })
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>, CliError> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blanks() {
        let v = parse_toas("# header\n1.5\n\n  2 # trailing\n3e2\n").unwrap();
        assert_eq!(v, vec![1.5, 2.0, 300.0]);
    }

    #[test]
    fn bad_line_is_named() {
        match parse_toas("1\n2\nabc\n") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_toas("inf\n"),
            Err(CliError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        let toas = vec![0.1, 1.0 / 3.0, 1e-17, 123456.789];
        write_toas(&p, &["period 3".into()], &toas).unwrap();
        assert_eq!(read_toas(&p).unwrap(), toas);
        assert_eq!(truth_path(&p), dir.path().join("t.txt.truth.csv"));
    }
}
