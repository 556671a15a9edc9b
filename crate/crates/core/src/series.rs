//! Column-per-variable time-series container and its CSV form.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

/// A regularly sampled multivariate series: `n_steps` rows by `n_vars`
/// columns, stored column-major so each variable is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl TimeSeriesMatrix {
    /// Builds a matrix from named columns.
    ///
    /// Rejects empty input, unequal column lengths, duplicate names and any
    /// non-finite entry.
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Invalid("time series needs at least one variable".into()));
        }
        if names.len() != columns.len() {
            return Err(Error::Shape(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Invalid(format!("duplicate variable name `{name}`")));
            }
        }
        let steps = columns[0].len();
        if steps == 0 {
            return Err(Error::Insufficient("no data rows".into()));
        }
        for (j, col) in columns.iter().enumerate() {
            if col.len() != steps {
                return Err(Error::Shape(format!(
                    "column `{}` has {} steps, expected {steps}",
                    names[j],
                    col.len()
                )));
            }
            if let Some(t) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "non-finite value at step {t}, variable `{}`",
                    names[j]
                )));
            }
        }
        Ok(Self { names, columns })
    }

    /// Builds a matrix from row-major values.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = names.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); n];
        for (t, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape(format!(
                    "row {t} has {} values, expected {n}",
                    row.len()
                )));
            }
            for (col, &v) in columns.iter_mut().zip(row) {
                col.push(v);
            }
        }
        Self::from_columns(names, columns)
    }

    /// Default names `x0, x1, ...` for generated data.
    pub fn default_names(n_vars: usize) -> Vec<String> {
        (0..n_vars).map(|j| format!("x{j}")).collect()
    }

    pub fn n_steps(&self) -> usize {
        self.columns[0].len()
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, t: usize, j: usize) -> f64 {
        self.columns[j][t]
    }

    /// Contiguous sub-span of time steps.
    pub fn slice_steps(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.n_steps() {
            return Err(Error::Invalid(format!(
                "step range {range:?} outside 0..{}",
                self.n_steps()
            )));
        }
        Ok(Self {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[range.clone()].to_vec()).collect(),
        })
    }

    /// Reads a headed, comma-separated file. Every body cell must parse as a
    /// finite decimal; errors name the offending row (1-based, header is row
    /// 1) and column.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let names: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(str::to_owned)
            .collect();
        if names.is_empty() || names.iter().any(String::is_empty) {
            return Err(Error::Csv("header row is missing or has empty names".into()));
        }
        let mut columns = vec![Vec::new(); names.len()];
        for (r, record) in reader.records().enumerate() {
            let line = r + 2;
            let record = record.map_err(|e| Error::Csv(e.to_string()))?;
            if record.len() != names.len() {
                return Err(Error::Csv(format!(
                    "row {line}: {} cells, header has {}",
                    record.len(),
                    names.len()
                )));
            }
            for (j, cell) in record.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Csv(format!("row {line}, column {} (`{}`): cannot parse `{cell}`", j + 1, names[j]))
                })?;
                if !v.is_finite() {
                    return Err(Error::Csv(format!(
                        "row {line}, column {} (`{}`): non-finite value `{cell}`",
                        j + 1,
                        names[j]
                    )));
                }
                columns[j].push(v);
            }
        }
        if columns[0].is_empty() {
            return Err(Error::Csv("no data rows".into()));
        }
        Self::from_columns(names, columns)
    }

    /// Writes the matrix as CSV. Values use the shortest decimal form that
    /// parses back to the identical `f64`.
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_csv(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{}", self.names.join(","))?;
        let mut line = String::new();
        for t in 0..self.n_steps() {
            line.clear();
            for (j, col) in self.columns.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&col[t].to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}
