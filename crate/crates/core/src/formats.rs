//! CSV tables and JSON documents used for datasets, predictions and
//! trajectories.
//!
//! Dataset files carry a header `x1,…,xd` followed by either `f`, `f1,…,fm`
//! or `dx1,…,dxd`. Values are written in shortest round-trip form.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::approximator::Dataset;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// A parsed CSV table: column names and rectangular numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    /// Number of leading columns named `x1, x2, …`.
    pub fn input_dim(&self) -> usize {
        self.header
            .iter()
            .enumerate()
            .take_while(|(i, h)| **h == format!("x{}", i + 1))
            .count()
    }

    pub fn column_names(&self, from: usize) -> &[String] {
        &self.header[from..]
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let shown = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{shown}: {e}")))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{shown}: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Parse(format!("{shown}: missing header row")));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // data rows are numbered from 1, the header being row 0
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse(format!("{shown}: row {row}: {e}")))?;
        if record.len() != header.len() {
            return Err(Error::Parse(format!(
                "{shown}: row {row}: expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        let values = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse(format!("{shown}: row {row}: invalid number '{s}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok(Table { header, rows })
}

/// Reads a dataset; every column after `x1..xd` is an output.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let table = read_table(path)?;
    let d = table.input_dim();
    if d == 0 {
        return Err(Error::Parse(format!("{}: header must start with x1", path.display())));
    }
    if table.header.len() == d {
        return Err(Error::Parse(format!("{}: no value columns after x{d}", path.display())));
    }
    if table.rows.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    let (points, values) = table.rows.into_iter().map(|r| (r[..d].to_vec(), r[d..].to_vec())).unzip();
    Dataset::from_rows(points, values)
}

/// Reads only the `x1..xd` columns of a table.
pub fn read_points(path: &Path) -> Result<Table> {
    let table = read_table(path)?;
    let d = table.input_dim();
    if d == 0 {
        return Err(Error::Parse(format!("{}: header must start with x1", path.display())));
    }
    Ok(Table {
        header: table.header[..d].to_vec(),
        rows: table.rows.into_iter().map(|r| r[..d].to_vec()).collect(),
    })
}

pub fn write_table(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let shown = path.display();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Io(format!("{shown}: {e}")))?;
    writer.write_record(header).map_err(|e| Error::Io(format!("{shown}: {e}")))?;
    for row in rows {
        writer
            .write_record(row.iter().map(|v| format_value(*v)))
            .map_err(|e| Error::Io(format!("{shown}: {e}")))?;
    }
    writer.flush().map_err(|e| Error::Io(format!("{shown}: {e}")))?;
    Ok(())
}

pub fn input_header(d: usize) -> Vec<String> {
    (1..=d).map(|k| format!("x{k}")).collect()
}

/// `f` for one output, `f1..fm` otherwise, each name prefixed.
pub fn output_header(prefix: &str, m: usize) -> Vec<String> {
    if m == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=m).map(|k| format!("{prefix}{k}")).collect()
    }
}

pub fn write_dataset(path: &Path, data: &Dataset, value_names: &[String]) -> Result<()> {
    let d = data.dim().unwrap_or(0);
    let mut header = input_header(d);
    header.extend_from_slice(value_names);
    let rows: Vec<Vec<f64>> = (0..data.len())
        .map(|i| {
            let mut r = data.points()[i].coords().to_vec();
            r.extend(data.values().row(i).iter());
            r
        })
        .collect();
    write_table(path, &header, &rows)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(input_header(traj.dim()));
    let rows: Vec<Vec<f64>> = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| std::iter::once(*t).chain(s.iter().copied()).collect())
        .collect();
    write_table(path, &header, &rows)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let table = read_table(path)?;
    if table.header.first().map(String::as_str) != Some("t") {
        return Err(Error::Parse(format!("{}: first column must be t", path.display())));
    }
    let (times, states) = table.rows.into_iter().map(|r| (r[0], r[1..].to_vec())).unzip();
    Trajectory::new(times, states)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    let mut file = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    file.write_all(text.as_bytes())
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}
