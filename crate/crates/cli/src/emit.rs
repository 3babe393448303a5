//! CSV and JSON output of result rows.
//!
//! CSV floats are written with 17 significant digits; JSON floats use the
//! shortest representation that parses back to the same `f64`. Failed values
//! are empty CSV fields and JSON `null`.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::experiment::{ResultRow, CSV_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn out_err(e: impl std::fmt::Display) -> CliError {
    CliError::Output(e.to_string())
}

pub fn write_csv<W: Write>(rows: &[ResultRow], w: W) -> CliResult<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_HEADER).map_err(out_err)?;
    for row in rows {
        let mut rec = vec![row.method.to_string(), row.rank.to_string(), row.replicate.to_string()];
        rec.extend(row.values().iter().map(|v| v.map(fmt_f64).unwrap_or_default()));
        wr.write_record(&rec).map_err(out_err)?;
    }
    wr.flush().map_err(out_err)
}

pub fn write_json<W: Write, T: Serialize>(rows: &[T], mut w: W) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut w, rows).map_err(out_err)?;
    writeln!(w).map_err(out_err)
}

pub fn read_csv<R: Read>(r: R) -> CliResult<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers().map_err(out_err)?.iter().map(String::from).collect();
    if header != CSV_HEADER {
        return Err(CliError::Output(format!("unexpected CSV header {header:?}")));
    }
    rd.deserialize().collect::<Result<_, _>>().map_err(out_err)
}

pub fn read_json<R: Read>(r: R) -> CliResult<Vec<ResultRow>> {
    serde_json::from_reader(r).map_err(out_err)
}

pub fn emit(rows: &[ResultRow], format: Format, path: Option<&Path>) -> CliResult<()> {
    with_output(path, |w| match format {
        Format::Csv => write_csv(rows, w),
        Format::Json => write_json(rows, w),
    })
}

/// Opens `path` (or stdout) and hands a buffered writer to `f`.
pub fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> CliResult<()>) -> CliResult<()> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::io(p, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush().map_err(|e| CliError::io(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            f(&mut w)?;
            w.flush().map_err(out_err)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Replicate;
    use bayesbt_core::Method;

    fn rows() -> Vec<ResultRow> {
        vec![
            ResultRow {
                method: Method::PdBt,
                rank: 3,
                replicate: Replicate::Index(0),
                restricted_forstner: Some(0.1 + 0.2),
                restricted_mahalanobis_sq: Some(1.0 / 3.0),
                rel_frobenius: Some(2.2250738585072014e-308),
                rel_mse: None,
                output_error_sq: Some(123456.789e10),
                hankel_tail: Some(std::f64::consts::PI),
                inhom_trace_bound: Some(0.0),
                expected_output_error_bound: Some(5e-324),
                kappa_estimate: Some(9.999999999999998),
                wallclock_ms: 0.25,
            },
            ResultRow {
                method: Method::Olr,
                rank: 0,
                replicate: Replicate::Mean,
                restricted_forstner: None,
                restricted_mahalanobis_sq: None,
                rel_frobenius: None,
                rel_mse: Some(1.0),
                output_error_sq: None,
                hankel_tail: None,
                inhom_trace_bound: None,
                expected_output_error_bound: None,
                kappa_estimate: None,
                wallclock_ms: 3.0,
            },
        ]
    }

    #[test]
    fn empty_csv_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut buf = Vec::new();
        write_csv(&rows(), &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), rows());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut buf = Vec::new();
        write_json(&rows(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"replicate\": \"mean\""));
        assert!(text.contains("\"rel_mse\": null"));
        assert_eq!(read_json(buf.as_slice()).unwrap(), rows());
    }

    #[test]
    fn csv_uses_seventeen_digits() {
        let mut buf = Vec::new();
        write_csv(&rows()[..1], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("3.0000000000000004e-1"));
        assert!(text.lines().nth(1).unwrap().starts_with("PdBT,3,0,"));
    }
}
