//! Stable file formats: matrices as CSV with one sample per row and header
//! `f0..f{d-1}`, labels as a single `label` column, traces as
//! `iter,R,Rc,DeltaR,grad_norm`. Floats are written with 17 significant
//! digits so rereading reproduces the exact doubles.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use coderate::learn::OptTrace;
use coderate::{FeatureMatrix64, LabelVector};
use nalgebra::DMatrix;

use crate::error::CliError;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_matrix(path: &Path, z: &FeatureMatrix64) -> Result<(), CliError> {
    let mut w = BufWriter::new(create(path)?);
    let header: Vec<String> = (0..z.dim()).map(|i| format!("f{i}")).collect();
    writeln!(w, "{}", header.join(",")).map_err(|e| CliError::io(path, e))?;
    // in-memory columns are samples; files carry samples as rows
    for c in 0..z.len() {
        let row: Vec<String> = (0..z.dim()).map(|r| fmt_f64(z.data()[(r, c)])).collect();
        writeln!(w, "{}", row.join(",")).map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<FeatureMatrix64, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::io(path, e))?.clone();
    let d = headers.len();
    for (i, h) in headers.iter().enumerate() {
        if h != format!("f{i}") {
            return Err(CliError::Runtime(format!(
                "{}: expected header column f{i}, found {h:?}",
                path.display()
            )));
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        if record.len() != d {
            return Err(CliError::Runtime(format!(
                "{}: row {} has {} fields, expected {d}",
                path.display(),
                rows.len() + 2,
                record.len()
            )));
        }
        let row: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        rows.push(row.map_err(|e| {
            CliError::Runtime(format!("{}: bad float: {e}", path.display()))
        })?);
    }
    if rows.is_empty() {
        return Err(CliError::Runtime(format!(
            "{}: no samples in matrix file",
            path.display()
        )));
    }
    let m = rows.len();
    let data = DMatrix::from_fn(d, m, |r, c| rows[c][r]);
    FeatureMatrix64::new(data).map_err(CliError::from)
}

pub fn write_labels(path: &Path, labels: &LabelVector) -> Result<(), CliError> {
    let mut w = BufWriter::new(create(path)?);
    writeln!(w, "label").map_err(|e| CliError::io(path, e))?;
    for &l in labels.as_slice() {
        writeln!(w, "{l}").map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<LabelVector, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let headers = reader.headers().map_err(|e| CliError::io(path, e))?;
    if headers.len() != 1 || &headers[0] != "label" {
        return Err(CliError::Runtime(format!(
            "{}: expected a single `label` column",
            path.display()
        )));
    }
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        labels.push(record[0].parse::<usize>().map_err(|e| {
            CliError::Runtime(format!("{}: bad label: {e}", path.display()))
        })?);
    }
    Ok(LabelVector::from(labels))
}

pub fn write_trace(path: &Path, trace: &OptTrace<f64>) -> Result<(), CliError> {
    let mut w = BufWriter::new(create(path)?);
    writeln!(w, "iter,R,Rc,DeltaR,grad_norm").map_err(|e| CliError::io(path, e))?;
    for r in &trace.records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.iter,
            fmt_f64(r.rate_whole),
            fmt_f64(r.rate_segmented),
            fmt_f64(r.reduction),
            fmt_f64(r.grad_norm)
        )
        .map_err(|e| CliError::io(path, e))?;
    }
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(create(path)?);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    writeln!(w).map_err(|e| CliError::io(path, e))?;
    Ok(())
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn matrix_and_label_files_round_trip_exact_doubles() {
        let dir = tempfile::tempdir().unwrap();
        let z = FeatureMatrix64::new(DMatrix::from_fn(3, 5, |r, c| {
            (r as f64 + 1.0) / (c as f64 + 3.0) * 1e-3 + std::f64::consts::PI
        }))
        .unwrap();
        let mpath = dir.path().join("z.csv");
        write_matrix(&mpath, &z).unwrap();
        let back = read_matrix(&mpath).unwrap();
        assert_eq!(z.data(), back.data());

        let labels = LabelVector::from(vec![0usize, 2, 1, 1, 0]);
        let lpath = dir.path().join("y.csv");
        write_labels(&lpath, &labels).unwrap();
        assert_eq!(read_labels(&lpath).unwrap(), labels);
    }

    #[test]
    fn read_matrix_rejects_bad_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x0,x1\n1.0,2.0\n").unwrap();
        assert!(read_matrix(&path).is_err());
    }
}
