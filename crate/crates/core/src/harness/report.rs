//! CSV and sidecar output.
//!
//! Every report is a CSV with a header row plus a JSON sidecar (same path,
//! `.json` extension) carrying the fully resolved configuration, master
//! seed, code version, and wall clock. The sidecar lands first; the CSV body
//! is streamed to `<path>.partial` and renamed into place at the end, so an
//! interrupted run leaves the partial file behind instead of a truncated
//! final CSV. Numbers are printed in Rust's shortest round-trip form: full
//! double precision, `.` decimal point, no locale.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// One emittable table row.
pub trait CsvRecord {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

#[derive(Debug, Serialize)]
struct Sidecar<'a, C: Serialize> {
    config: &'a C,
    master_seed: u64,
    code_version: &'static str,
    wall_clock_seconds: f64,
    rows: usize,
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes the sidecar, then the CSV (atomically via a `.partial` rename).
pub fn write_report<R: CsvRecord, C: Serialize>(
    csv_path: &Path,
    rows: &[R],
    config: &C,
    master_seed: u64,
    wall_clock_seconds: f64,
) -> Result<()> {
    let mut body = String::new();
    body.push_str(&R::header().join(","));
    body.push('\n');
    for row in rows {
        body.push_str(&row.fields().join(","));
        body.push('\n');
    }
    write_csv_with_sidecar(csv_path, &body, config, master_seed, wall_clock_seconds, rows.len())
}

/// Same contract for a pre-rendered CSV body (header line included).
pub fn write_raw_csv<C: Serialize>(
    csv_path: &Path,
    body: &str,
    config: &C,
    master_seed: u64,
    wall_clock_seconds: f64,
) -> Result<()> {
    let rows = body.lines().count().saturating_sub(1);
    write_csv_with_sidecar(csv_path, body, config, master_seed, wall_clock_seconds, rows)
}

fn write_csv_with_sidecar<C: Serialize>(
    csv_path: &Path,
    body: &str,
    config: &C,
    master_seed: u64,
    wall_clock_seconds: f64,
    rows: usize,
) -> Result<()> {
    let sidecar = Sidecar {
        config,
        master_seed,
        code_version: env!("CARGO_PKG_VERSION"),
        wall_clock_seconds,
        rows,
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Config(format!("could not serialize sidecar: {e}")))?;
    if let Some(parent) = csv_path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(sidecar_path(csv_path), json)?;

    let partial = csv_path.with_extension(match csv_path.extension() {
        Some(ext) => format!("{}.partial", ext.to_string_lossy()),
        None => "partial".to_string(),
    });
    {
        let mut out = std::io::BufWriter::new(fs::File::create(&partial)?);
        out.write_all(body.as_bytes())?;
        out.flush()?;
    }
    fs::rename(&partial, csv_path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Row(u32, f64);

    impl CsvRecord for Row {
        fn header() -> &'static [&'static str] {
            &["n", "value"]
        }
        fn fields(&self) -> Vec<String> {
            vec![self.0.to_string(), format_f64(self.1)]
        }
    }

    #[test]
    fn writes_csv_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let rows = vec![Row(1, 0.5), Row(2, 1.0 / 3.0)];
        write_report(&path, &rows, &serde_json::json!({"kind": "demo"}), 7, 0.25).unwrap();
        let csv = fs::read_to_string(&path).unwrap();
        assert!(csv.starts_with("n,value\n"));
        assert!(csv.contains("2,0.3333333333333333"));
        let sidecar = fs::read_to_string(path.with_extension("json")).unwrap();
        assert!(sidecar.contains("\"master_seed\": 7"));
        assert!(sidecar.contains("\"rows\": 2"));
        assert!(!path.with_extension("csv.partial").exists());
    }

    #[test]
    fn full_precision_round_trips() {
        let v = 0.1f64 + 0.2f64;
        let s = format_f64(v);
        assert_eq!(s.parse::<f64>().unwrap(), v);
    }
}
