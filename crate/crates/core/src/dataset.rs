//! Tabular input, the fine equal-frequency pre-bin grid, and the grouped
//! one-hot expansion of every variable.

use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Continuous features stored column-major plus a 0/1 target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    target: Vec<u8>,
    names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset after checking shapes, finiteness and the binary target.
    pub fn new(columns: Vec<Vec<f64>>, target: Vec<u8>, names: Vec<String>) -> Result<Self> {
        if columns.is_empty() || target.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if names.len() != columns.len() {
            return Err(Error::Shape(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        for (name, col) in names.iter().zip(&columns) {
            if col.len() != target.len() {
                return Err(Error::Shape(format!(
                    "column '{name}' has {} rows, target has {}",
                    col.len(),
                    target.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Unparsable {
                    row: i + 1,
                    column: name.clone(),
                    value: col[i].to_string(),
                });
            }
        }
        if let Some(i) = target.iter().position(|&y| y > 1) {
            return Err(Error::TargetNotBinary {
                row: i + 1,
                value: target[i].to_string(),
            });
        }
        Ok(Dataset {
            columns,
            target,
            names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn target(&self) -> &[u8] {
        &self.target
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Row `i` as a vector of p values.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Rows `rows` in the given order.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            target: rows.iter().map(|&i| self.target[i]).collect(),
            names: self.names.clone(),
        }
    }

    /// Writes the dataset as CSV with the target as the last column.
    pub fn write_csv(&self, path: &Path, target_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(target_name);
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = self.columns.iter().map(|c| c[i].to_string()).collect();
            rec.push(self.target[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL")
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    let cell = cell.trim();
    if is_missing(cell) {
        return Err(Error::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Unparsable {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

struct Table {
    header: Vec<String>,
    records: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Table { header, records })
}

impl Table {
    fn index_of(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    fn numeric_column(&self, idx: usize) -> Result<Vec<f64>> {
        let name = &self.header[idx];
        self.records
            .iter()
            .enumerate()
            .map(|(i, rec)| parse_cell(rec.get(idx).unwrap_or(""), i + 1, name))
            .collect()
    }
}

/// Reads a headed, comma-delimited file. Every column other than the target
/// (or only those listed in `schema`) becomes a feature, in file order.
/// Rows are numbered from 1, counting data rows only.
pub fn load_csv(path: &Path, target_column: &str, schema: Option<&[String]>) -> Result<Dataset> {
    let table = read_table(path)?;
    let target_idx = table.index_of(target_column)?;
    if table.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let feature_idx: Vec<usize> = match schema {
        Some(cols) => {
            let mut idx = cols
                .iter()
                .map(|c| table.index_of(c))
                .collect::<Result<Vec<_>>>()?;
            idx.sort_unstable();
            idx.dedup();
            idx.retain(|&i| i != target_idx);
            idx
        }
        None => (0..table.header.len()).filter(|&i| i != target_idx).collect(),
    };
    if feature_idx.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut target = Vec::with_capacity(table.records.len());
    for (i, rec) in table.records.iter().enumerate() {
        let cell = rec.get(target_idx).unwrap_or("").trim();
        if is_missing(cell) {
            return Err(Error::MissingValue {
                row: i + 1,
                column: target_column.to_string(),
            });
        }
        let y = match cell.parse::<f64>() {
            Ok(v) if v == 0.0 => 0,
            Ok(v) if v == 1.0 => 1,
            _ => {
                return Err(Error::TargetNotBinary {
                    row: i + 1,
                    value: cell.to_string(),
                })
            }
        };
        target.push(y);
    }
    let columns = feature_idx
        .iter()
        .map(|&j| table.numeric_column(j))
        .collect::<Result<Vec<_>>>()?;
    let names = feature_idx.iter().map(|&j| table.header[j].clone()).collect();
    Dataset::new(columns, target, names)
}

/// Reads only the named numeric columns, in the order given. Used for
/// scoring files that may lack a target column.
pub fn load_columns(path: &Path, columns: &[String]) -> Result<Vec<Vec<f64>>> {
    let table = read_table(path)?;
    if table.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    columns
        .iter()
        .map(|c| table.numeric_column(table.index_of(c)?))
        .collect()
}

/// Per-variable interior cut points. Bin `k` of variable `j` is
/// `[cuts[k-1], cuts[k])`, with the first bin open at −∞ and the last
/// extending to +∞.
#[derive(Debug, Clone, PartialEq)]
pub struct BinGrid {
    nbins: usize,
    names: Vec<String>,
    cuts: Vec<Vec<f64>>,
}

impl BinGrid {
    pub fn new(nbins: usize, names: Vec<String>, cuts: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != cuts.len() {
            return Err(Error::Shape(format!(
                "{} names for {} cut lists",
                names.len(),
                cuts.len()
            )));
        }
        for (name, c) in names.iter().zip(&cuts) {
            if c.iter().any(|v| !v.is_finite()) || c.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidConfig(format!(
                    "cut points of '{name}' must be finite and strictly increasing"
                )));
            }
            if c.len() + 1 > nbins.max(1) {
                return Err(Error::InvalidConfig(format!(
                    "'{name}' has {} bins, more than nbins={nbins}",
                    c.len() + 1
                )));
            }
        }
        Ok(BinGrid { nbins, names, cuts })
    }

    pub fn nbins(&self) -> usize {
        self.nbins
    }

    pub fn n_vars(&self) -> usize {
        self.cuts.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cuts(&self, j: usize) -> &[f64] {
        &self.cuts[j]
    }

    /// Number of bins `m_j` of variable `j`.
    pub fn n_bins(&self, j: usize) -> usize {
        self.cuts[j].len() + 1
    }

    pub fn bin_counts(&self) -> Vec<usize> {
        (0..self.n_vars()).map(|j| self.n_bins(j)).collect()
    }

    pub fn total_bins(&self) -> usize {
        self.cuts.iter().map(|c| c.len() + 1).sum()
    }

    /// Zero-based index of the bin of variable `j` containing `v`.
    pub fn assign_bin(&self, j: usize, v: f64) -> usize {
        assign(&self.cuts[j], v)
    }

    pub fn to_json(&self) -> Value {
        let mut cuts = Map::new();
        for (name, c) in self.names.iter().zip(&self.cuts) {
            cuts.insert(name.clone(), Value::from(c.clone()));
        }
        let mut obj = Map::new();
        obj.insert("nbins".into(), Value::from(self.nbins));
        obj.insert("cutpoints".into(), Value::Object(cuts));
        Value::Object(obj)
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidConfig(format!("grid JSON: {msg}"));
        let nbins = value
            .get("nbins")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("missing integer 'nbins'"))? as usize;
        let cuts_obj = value
            .get("cutpoints")
            .and_then(Value::as_object)
            .ok_or_else(|| bad("missing object 'cutpoints'"))?;
        let mut names = Vec::with_capacity(cuts_obj.len());
        let mut cuts = Vec::with_capacity(cuts_obj.len());
        for (name, arr) in cuts_obj {
            let c = arr
                .as_array()
                .ok_or_else(|| bad("cut points must be arrays"))?
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| bad("cut points must be numbers")))
                .collect::<Result<Vec<_>>>()?;
            names.push(name.clone());
            cuts.push(c);
        }
        BinGrid::new(nbins, names, cuts)
    }
}

/// Number of cut points `<= v`, which is the zero-based bin index under
/// left-closed intervals.
pub(crate) fn assign(cuts: &[f64], v: f64) -> usize {
    cuts.partition_point(|&c| c <= v)
}

/// Equal-frequency grid. For each level `k/nbins` the nearest-rank quantile
/// `q` is located in the sorted column and the cut is placed at the first
/// observed value strictly above `q`, so `q` itself stays in the lower
/// left-closed bin. Duplicate cuts collapse.
pub fn fit_grid(data: &Dataset, nbins: usize) -> Result<BinGrid> {
    if nbins < 2 {
        return Err(Error::InvalidConfig(format!("nbins must be >= 2, got {nbins}")));
    }
    let cuts = data
        .columns()
        .iter()
        .map(|col| quantile_cuts(col, nbins))
        .collect();
    BinGrid::new(nbins, data.names().to_vec(), cuts)
}

fn quantile_cuts(col: &[f64], nbins: usize) -> Vec<f64> {
    let mut sorted = col.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cuts: Vec<f64> = (1..nbins)
        .filter_map(|k| {
            let rank = (k * n).div_ceil(nbins);
            let q = sorted[rank - 1];
            let above = sorted.partition_point(|&x| x <= q);
            sorted.get(above).copied()
        })
        .collect();
    cuts.dedup();
    cuts
}

/// Sparse one-hot expansion: row `i` carries, per variable `j`, the bin
/// index of `x_{i,j}`. Column `offset(j) + k` of the implied indicator
/// matrix is the sub-variable for bin `k` of variable `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDesign {
    n: usize,
    p: usize,
    bins: Vec<u32>,
    offsets: Vec<usize>,
}

impl EncodedDesign {
    /// Builds a design from row-major bin indices and per-variable widths.
    pub fn from_bins(bins: Vec<u32>, widths: &[usize]) -> Result<Self> {
        let p = widths.len();
        if p == 0 || bins.len() % p != 0 {
            return Err(Error::Shape(format!(
                "{} bin indices do not fill rows of {p} variables",
                bins.len()
            )));
        }
        let n = bins.len() / p;
        let mut offsets = Vec::with_capacity(p + 1);
        let mut acc = 0;
        offsets.push(0);
        for &w in widths {
            if w == 0 {
                return Err(Error::Shape("variable with zero bins".into()));
            }
            acc += w;
            offsets.push(acc);
        }
        for row in bins.chunks(p) {
            for (j, &b) in row.iter().enumerate() {
                if b as usize >= widths[j] {
                    return Err(Error::Shape(format!(
                        "bin {b} out of range for variable {j} with {} bins",
                        widths[j]
                    )));
                }
            }
        }
        Ok(EncodedDesign {
            n,
            p,
            bins,
            offsets,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_vars(&self) -> usize {
        self.p
    }

    /// Σ_j m_j.
    pub fn n_cols(&self) -> usize {
        self.offsets[self.p]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn group_width(&self, j: usize) -> usize {
        self.offsets[j + 1] - self.offsets[j]
    }

    pub fn widths(&self) -> Vec<usize> {
        (0..self.p).map(|j| self.group_width(j)).collect()
    }

    /// Bin indices of row `i`, one per variable.
    pub fn row_bins(&self, i: usize) -> &[u32] {
        &self.bins[i * self.p..(i + 1) * self.p]
    }

    pub(crate) fn raw_bins(&self) -> &[u32] {
        &self.bins
    }

    /// Global column of row `i`'s indicator for variable `j`.
    pub fn column_of(&self, i: usize, j: usize) -> usize {
        self.offsets[j] + self.bins[i * self.p + j] as usize
    }

    /// `(variable, bin)` identity of a global column.
    pub fn column_group(&self, col: usize) -> (usize, usize) {
        let j = self.offsets.partition_point(|&o| o <= col) - 1;
        (j, col - self.offsets[j])
    }

    /// Value of indicator `(i, col)`.
    pub fn indicator(&self, i: usize, col: usize) -> f64 {
        let (j, k) = self.column_group(col);
        f64::from(u8::from(self.bins[i * self.p + j] as usize == k))
    }

    /// Training rows per global column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_cols()];
        for i in 0..self.n {
            for j in 0..self.p {
                counts[self.column_of(i, j)] += 1;
            }
        }
        counts
    }

    pub fn subset(&self, rows: &[usize]) -> EncodedDesign {
        let mut bins = Vec::with_capacity(rows.len() * self.p);
        for &i in rows {
            bins.extend_from_slice(self.row_bins(i));
        }
        EncodedDesign {
            n: rows.len(),
            p: self.p,
            bins,
            offsets: self.offsets.clone(),
        }
    }

    /// Replaces row `i`'s bins; panics on out-of-range input.
    pub fn set_row_bins(&mut self, i: usize, row: &[u32]) {
        assert_eq!(row.len(), self.p);
        for (j, &b) in row.iter().enumerate() {
            assert!((b as usize) < self.group_width(j));
        }
        self.bins[i * self.p..(i + 1) * self.p].copy_from_slice(row);
    }
}

/// One-hot encodes `data` against `grid`. Total over finite inputs.
pub fn encode(data: &Dataset, grid: &BinGrid) -> Result<EncodedDesign> {
    encode_columns(data.columns(), grid)
}

pub fn encode_columns(columns: &[Vec<f64>], grid: &BinGrid) -> Result<EncodedDesign> {
    if columns.len() != grid.n_vars() {
        return Err(Error::Shape(format!(
            "data has {} variables, grid has {}",
            columns.len(),
            grid.n_vars()
        )));
    }
    let n = columns.first().map_or(0, Vec::len);
    let p = columns.len();
    let mut bins = vec![0u32; n * p];
    for (j, col) in columns.iter().enumerate() {
        if col.len() != n {
            return Err(Error::Shape("ragged columns".into()));
        }
        for (i, &v) in col.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteInput(grid.names()[j].clone()));
            }
            bins[i * p + j] = grid.assign_bin(j, v) as u32;
        }
    }
    EncodedDesign::from_bins(bins, &grid.bin_counts())
}
