//! CSV tables. Column order is part of the interface:
//!
//! | table            | columns                |
//! |------------------|------------------------|
//! | `schwinger*.csv` | `t,value,stderr`       |
//! | `spectrum.csv`   | `index,E,P`            |
//! | `kernel.csv`     | `n,j,multiplier`       |
//! | `weights.csv`    | `index,log_weight`     |
//!
//! A table with no rows still carries its header.

use std::path::Path;

use pphi2_core::CovKernel;
use pphi2_fock::ground::SpectrumLine;

use crate::error::{CliError, Result};

pub const SCHWINGER_HEADER: [&str; 3] = ["t", "value", "stderr"];
pub const SPECTRUM_HEADER: [&str; 3] = ["index", "E", "P"];
pub const KERNEL_HEADER: [&str; 3] = ["n", "j", "multiplier"];
pub const WEIGHTS_HEADER: [&str; 2] = ["index", "log_weight"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchwingerRow {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

pub fn write_table<const K: usize>(path: &Path, header: [&str; K], rows: impl IntoIterator<Item = [String; K]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(header).map_err(|e| csv_io(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => CliError::Config(format!("{other:?}")),
        }
    } else {
        CliError::Csv(e)
    }
}

// `{}` on f64 prints the shortest string that parses back to the same value.
fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_schwinger(path: &Path, rows: &[SchwingerRow]) -> Result<()> {
    write_table(path, SCHWINGER_HEADER, rows.iter().map(|r| [num(r.t), num(r.value), num(r.stderr)]))
}

pub fn write_spectrum(path: &Path, lines: &[SpectrumLine]) -> Result<()> {
    write_table(path, SPECTRUM_HEADER, lines.iter().map(|l| [l.index.to_string(), num(l.energy), num(l.momentum)]))
}

/// The Fourier multiplier `M(n, j)` with `n` the time and `j` the space
/// frequency index.
pub fn write_kernel(path: &Path, kernel: &CovKernel) -> Result<()> {
    let s = kernel.spec();
    let rows = (0..s.nt).flat_map(|n| (0..s.nx).map(move |j| [n.to_string(), j.to_string(), num(kernel.get(n, j))]));
    write_table(path, KERNEL_HEADER, rows)
}

pub fn write_weights(path: &Path, log_w: &[f64]) -> Result<()> {
    write_table(path, WEIGHTS_HEADER, log_w.iter().enumerate().map(|(i, w)| [i.to_string(), num(*w)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_tables_keep_their_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_schwinger(&p, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "t,value,stderr\n");
        let p = dir.path().join("e.csv");
        write_spectrum(&p, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "index,E,P\n");
    }

    #[test]
    fn numbers_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let rows = [SchwingerRow { t: 0.1, value: 1.0 / 3.0, stderr: 2e-17 }];
        write_schwinger(&p, &rows).unwrap();
        let mut r = csv::Reader::from_path(&p).unwrap();
        let rec = r.records().next().unwrap().unwrap();
        let back: Vec<f64> = rec.iter().map(|v| v.parse().unwrap()).collect();
        assert_eq!(back, vec![0.1, 1.0 / 3.0, 2e-17]);
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let err = write_schwinger(Path::new("/nonexistent-dir/x.csv"), &[]).unwrap_err();
        assert_eq!(err.exit_code(), crate::error::exit::IO);
    }
}
