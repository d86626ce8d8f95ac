//! Numeric tables loaded from headered CSV.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major `n x d` numeric table with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    names: Vec<String>,
    n: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = names.len();
        let mut values = Vec::with_capacity(rows.len() * d);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Parse(format!("row {r} has {} values, expected {d}", row.len())));
            }
            values.extend_from_slice(row);
        }
        Ok(Self { names, n: rows.len(), values })
    }

    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Parse("one name per column".into()));
        }
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Parse("columns differ in length".into()));
        }
        let rows = (0..n).map(|r| columns.iter().map(|c| c[r]).collect()).collect();
        Self::new(names, rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.d() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let d = self.d();
        &self.values[r * d..(r + 1) * d]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, c)).collect()
    }

    /// Keeps the listed columns, in the listed order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let names = cols.iter().map(|&c| self.names[c].clone()).collect();
        let mut values = Vec::with_capacity(self.n * cols.len());
        for r in 0..self.n {
            values.extend(cols.iter().map(|&c| self.get(r, c)));
        }
        Self { names, n: self.n, values }
    }

    /// Indices of the `k` highest-variance columns, returned in column order.
    pub fn top_variance_columns(&self, k: usize) -> Vec<usize> {
        let mut var: Vec<(usize, f64)> = (0..self.d()).map(|c| (c, variance(&self.column(c)))).collect();
        var.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut keep: Vec<usize> = var.into_iter().take(k).map(|(c, _)| c).collect();
        keep.sort_unstable();
        keep
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

pub(crate) fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

fn parse_cell(s: &str, r: usize, col: &str) -> Result<f64> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    t.parse().map_err(|_| Error::Parse(format!("row {r}, column {col:?}: not a number: {t:?}")))
}

/// Reads `N x D` numeric data with a header row of variable names.
pub fn read_numeric_csv<R: Read>(reader: R) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec.iter().zip(&names).map(|(s, n)| parse_cell(s, r, n)).collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    DataMatrix::new(names, rows)
}

pub fn load_numeric_csv(path: impl AsRef<Path>) -> Result<DataMatrix> {
    read_numeric_csv(std::fs::File::open(path)?)
}

/// Name of the metadata column in interventional files.
pub const PERTURBATION_COLUMN: &str = "perturbation";
/// Marker for unperturbed rows.
pub const CONTROL_LABEL: &str = "control";

/// Control samples plus one sample group per perturbed variable.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionalData {
    pub control: DataMatrix,
    /// `(target column, samples)`, sorted by target.
    pub groups: Vec<(usize, DataMatrix)>,
}

impl InterventionalData {
    pub fn names(&self) -> &[String] {
        self.control.names()
    }

    pub fn d(&self) -> usize {
        self.control.d()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut groups = Vec::new();
        for (t, g) in &self.groups {
            if let Some(pos) = cols.iter().position(|c| c == t) {
                groups.push((pos, g.select_columns(cols)));
            }
        }
        groups.sort_by_key(|g| g.0);
        Self { control: self.control.select_columns(cols), groups }
    }
}

/// Reads interventional data: one column per variable plus a
/// `perturbation` column naming the target or `control`.
///
/// Rows whose target is not a column are skipped with a warning.
pub fn read_interventional_csv<R: Read>(reader: R) -> Result<InterventionalData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let pcol = header
        .iter()
        .position(|h| h == PERTURBATION_COLUMN)
        .ok_or_else(|| Error::Parse(format!("missing {PERTURBATION_COLUMN:?} column")))?;
    let names: Vec<String> = header.iter().enumerate().filter(|(k, _)| *k != pcol).map(|(_, h)| h.clone()).collect();

    let mut control = Vec::new();
    let mut groups: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    let mut unknown: BTreeMap<String, usize> = BTreeMap::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let target = rec.get(pcol).unwrap_or("").to_owned();
        let row = rec
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != pcol)
            .map(|(k, s)| parse_cell(s, r, &header[k]))
            .collect::<Result<Vec<_>>>()?;
        if target.eq_ignore_ascii_case(CONTROL_LABEL) {
            control.push(row);
        } else if let Some(t) = names.iter().position(|n| *n == target) {
            groups.entry(t).or_default().push(row);
        } else {
            *unknown.entry(target).or_default() += 1;
        }
    }
    for (t, n) in &unknown {
        log::warn!("skipping {n} rows perturbing unmeasured target {t:?}");
    }
    if control.is_empty() {
        return Err(Error::Config("interventional data has no control rows".into()));
    }
    let groups = groups
        .into_iter()
        .map(|(t, rows)| Ok((t, DataMatrix::new(names.clone(), rows)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(InterventionalData { control: DataMatrix::new(names, control)?, groups })
}

pub fn load_interventional_csv(path: impl AsRef<Path>) -> Result<InterventionalData> {
    read_interventional_csv(std::fs::File::open(path)?)
}
