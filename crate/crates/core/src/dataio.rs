//! Loading, cleaning, label encoding, scaling, subsampling and splitting of
//! flow-feature tables.
//!
//! The raw stage keeps every cell as parsed ([`Cell`]); [`clean`] removes the
//! configured identifier columns and any row that carries a missing, infinite
//! or duplicate record; [`encode_labels`] turns the result into a dense numeric
//! [`FlowTable`] with benign rows labelled `1` and every other label `0`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Label value of benign flows after encoding.
pub const BENIGN: u8 = 1;
/// Label value of malicious flows after encoding.
pub const MALICIOUS: u8 = 0;

/// Columns that identify a flow rather than describe it. Names absent from a
/// given file are skipped.
pub const DEFAULT_DROP_COLUMNS: [&str; 11] = [
    "Unnamed",
    "Unnamed: 0",
    "Flow ID",
    "Source IP",
    "Destination IP",
    "Source Port",
    "Destination Port",
    "Timestamp",
    "Flow Bytes",
    "Flow Packets",
    "SimilarHTTP",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Number(f64),
    Missing,
    Infinite,
    Text(String),
}

impl Cell {
    /// Parses one CSV field. Empty fields and NaN literals are missing,
    /// infinity literals are infinite, anything else that is not a decimal
    /// number stays text.
    pub fn parse(field: &str) -> Cell {
        let t = field.trim();
        if t.is_empty() {
            return Cell::Missing;
        }
        match t.to_ascii_lowercase().trim_start_matches(['+', '-']) {
            "nan" => return Cell::Missing,
            "inf" | "infinity" => return Cell::Infinite,
            _ => {}
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_nan() => Cell::Missing,
            Ok(v) if v.is_infinite() => Cell::Infinite,
            Ok(v) => Cell::Number(v),
            Err(_) => Cell::Text(t.to_string()),
        }
    }

    fn is_defective(&self) -> bool {
        matches!(self, Cell::Missing | Cell::Infinite)
    }

    fn to_field(&self) -> String {
        match self {
            Cell::Number(v) => format!("{v}"),
            Cell::Missing => "NaN".to_string(),
            Cell::Infinite => "Infinity".to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// Hashable identity of a cell, used for duplicate detection.
#[derive(Hash, PartialEq, Eq)]
enum CellKey<'a> {
    Number(u64),
    Missing,
    Infinite,
    Text(&'a str),
}

impl<'a> From<&'a Cell> for CellKey<'a> {
    fn from(c: &'a Cell) -> Self {
        match c {
            // -0.0 and 0.0 compare equal, so they must hash equal.
            Cell::Number(v) if *v == 0.0 => CellKey::Number(0),
            Cell::Number(v) => CellKey::Number(v.to_bits()),
            Cell::Missing => CellKey::Missing,
            Cell::Infinite => CellKey::Infinite,
            Cell::Text(s) => CellKey::Text(s),
        }
    }
}

/// A table exactly as read from disk, before cleaning.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    column_names: Vec<String>,
    rows: Vec<Vec<Cell>>,
    label_column: String,
}

impl RawTable {
    pub fn new(
        column_names: Vec<String>,
        rows: Vec<Vec<Cell>>,
        label_column: impl Into<String>,
    ) -> Result<Self> {
        let label_column = label_column.into();
        if !column_names.contains(&label_column) {
            return Err(Error::MissingLabelColumn(label_column));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != column_names.len()) {
            return Err(Error::DimensionMismatch {
                expected: column_names.len(),
                got: bad.len(),
            });
        }
        Ok(Self {
            column_names,
            rows,
            label_column,
        })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_columns(&self) -> usize {
        self.column_names.len()
    }

    fn label_index(&self) -> usize {
        self.column_names
            .iter()
            .position(|c| *c == self.label_column)
            .expect("label column checked at construction")
    }

    /// Label text of every row.
    pub fn labels(&self) -> Vec<String> {
        let li = self.label_index();
        self.rows.iter().map(|r| label_text(&r[li])).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(&self.column_names)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_field))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn label_text(cell: &Cell) -> String {
    match cell {
        Cell::Text(s) => s.clone(),
        other => other.to_field(),
    }
}

/// Reads a comma-separated file with a header row.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let column_names: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let label_idx = column_names
        .iter()
        .position(|c| c == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row: Vec<Cell> = record
            .iter()
            .enumerate()
            .map(|(i, field)| {
                if i == label_idx {
                    Cell::Text(field.trim().to_string())
                } else {
                    Cell::parse(field)
                }
            })
            .collect();
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::NoRows);
    }
    RawTable::new(column_names, rows, label_column)
}

/// Drops the named columns, then every row holding a missing or infinite
/// cell, then exact duplicate rows (first occurrence kept).
pub fn clean<S: AsRef<str>>(raw: &RawTable, drop_columns: &[S]) -> Result<RawTable> {
    let keep: Vec<usize> = raw
        .column_names
        .iter()
        .enumerate()
        .filter(|(_, name)| {
            **name == raw.label_column || !drop_columns.iter().any(|d| d.as_ref() == name.as_str())
        })
        .map(|(i, _)| i)
        .collect();
    if keep.len() < 2 {
        return Err(Error::EmptyResult("clean"));
    }
    let column_names: Vec<String> = keep.iter().map(|&i| raw.column_names[i].clone()).collect();

    let mut seen: HashSet<Vec<CellKey<'_>>> = HashSet::new();
    let mut kept_rows: Vec<&Vec<Cell>> = Vec::new();
    for row in &raw.rows {
        if keep.iter().any(|&i| row[i].is_defective()) {
            continue;
        }
        let key: Vec<CellKey<'_>> = keep.iter().map(|&i| CellKey::from(&row[i])).collect();
        if seen.insert(key) {
            kept_rows.push(row);
        }
    }
    if kept_rows.is_empty() {
        return Err(Error::EmptyResult("clean"));
    }
    let rows = kept_rows
        .into_iter()
        .map(|row| keep.iter().map(|&i| row[i].clone()).collect())
        .collect();
    RawTable::new(column_names, rows, raw.label_column.clone())
}

/// Converts a cleaned table into a numeric [`FlowTable`]: rows whose label
/// equals `benign_value` get [`BENIGN`], all others [`MALICIOUS`].
pub fn encode_labels<T: Scalar>(raw: &RawTable, benign_value: &str) -> Result<FlowTable<T>> {
    let li = raw.label_index();
    let feature_names: Vec<String> = raw
        .column_names
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != li)
        .map(|(_, n)| n.clone())
        .collect();
    let mut features = Vec::with_capacity(raw.rows.len());
    let mut labels = Vec::with_capacity(raw.rows.len());
    for (r, row) in raw.rows.iter().enumerate() {
        let mut values = Vec::with_capacity(feature_names.len());
        for (c, cell) in row.iter().enumerate() {
            if c == li {
                continue;
            }
            match cell {
                Cell::Number(v) => {
                    let x = T::lit(*v);
                    if !x.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "{v} in column {:?} overflows the scalar type",
                            raw.column_names[c]
                        )));
                    }
                    values.push(x);
                }
                _ => {
                    return Err(Error::NonNumericCell {
                        column: raw.column_names[c].clone(),
                        row: r,
                    })
                }
            }
        }
        features.push(values);
        labels.push(if label_text(&row[li]) == benign_value {
            BENIGN
        } else {
            MALICIOUS
        });
    }
    FlowTable::new(feature_names, features, labels)
}

/// Dense numeric feature table with binary labels.
///
/// All cells are finite and labels are [`BENIGN`] or [`MALICIOUS`]. A table
/// may have zero rows (e.g. an empty evaluation batch) but always at least one
/// feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTable<T> {
    feature_names: Vec<String>,
    features: Vec<Vec<T>>,
    labels: Vec<u8>,
}

impl<T: Scalar> FlowTable<T> {
    pub fn new(feature_names: Vec<String>, features: Vec<Vec<T>>, labels: Vec<u8>) -> Result<Self> {
        if feature_names.is_empty() {
            return Err(Error::invalid("table needs at least one feature"));
        }
        let mut names = HashSet::new();
        if let Some(dup) = feature_names.iter().find(|n| !names.insert(n.as_str())) {
            return Err(Error::invalid(format!("duplicate feature name {dup:?}")));
        }
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        for (r, row) in features.iter().enumerate() {
            if row.len() != feature_names.len() {
                return Err(Error::DimensionMismatch {
                    expected: feature_names.len(),
                    got: row.len(),
                });
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "row {r}, column {:?}",
                    feature_names[c]
                )));
            }
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::invalid(format!("label {bad} outside {{0, 1}}")));
        }
        Ok(Self {
            feature_names,
            features,
            labels,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// `(benign, malicious)` row counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let benign = self.labels.iter().filter(|&&l| l == BENIGN).count();
        (benign, self.labels.len() - benign)
    }

    pub fn has_both_classes(&self) -> bool {
        let (b, m) = self.class_counts();
        b > 0 && m > 0
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.features.iter().map(|r| r[j]).collect()
    }

    /// New table holding the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Restricts the table to the named columns, in the order given.
    pub fn project<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let idx = names
            .iter()
            .map(|n| {
                self.feature_index(n.as_ref())
                    .ok_or_else(|| Error::UnknownFeature(n.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let feature_names = names.iter().map(|n| n.as_ref().to_string()).collect();
        let features = self
            .features
            .iter()
            .map(|r| idx.iter().map(|&j| r[j]).collect())
            .collect();
        Self::new(feature_names, features, self.labels.clone())
    }

    /// Raw form with a numeric label column (`1` benign, `0` malicious).
    pub fn to_raw(&self, label_column: &str) -> RawTable {
        let mut column_names = self.feature_names.clone();
        column_names.push(label_column.to_string());
        let rows = self
            .features
            .iter()
            .zip(&self.labels)
            .map(|(r, &l)| {
                let mut cells: Vec<Cell> = r.iter().map(|v| Cell::Number(v.as_f64())).collect();
                cells.push(Cell::Text(l.to_string()));
                cells
            })
            .collect();
        RawTable {
            column_names,
            rows,
            label_column: label_column.to_string(),
        }
    }
}

/// Per-feature bounds for min-max normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams<T> {
    pub feature_names: Vec<String>,
    pub mins: Vec<T>,
    pub maxes: Vec<T>,
}

impl<T: Scalar> ScalerParams<T> {
    pub fn project<S: AsRef<str>>(&self, names: &[S]) -> Result<Self> {
        let mut out = ScalerParams {
            feature_names: Vec::with_capacity(names.len()),
            mins: Vec::with_capacity(names.len()),
            maxes: Vec::with_capacity(names.len()),
        };
        for n in names {
            let j = self
                .feature_names
                .iter()
                .position(|f| f == n.as_ref())
                .ok_or_else(|| Error::UnknownFeature(n.as_ref().to_string()))?;
            out.feature_names.push(self.feature_names[j].clone());
            out.mins.push(self.mins[j]);
            out.maxes.push(self.maxes[j]);
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let params: Self = read_json(path)?;
        let p = params.feature_names.len();
        if params.mins.len() != p || params.maxes.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: params.mins.len().min(params.maxes.len()),
            });
        }
        if params.mins.iter().zip(&params.maxes).any(|(lo, hi)| lo > hi) {
            return Err(Error::invalid("scaler has min > max"));
        }
        Ok(params)
    }
}

pub fn fit_scaler<T: Scalar>(table: &FlowTable<T>) -> Result<ScalerParams<T>> {
    if table.is_empty() {
        return Err(Error::NoRows);
    }
    let p = table.n_features();
    let mut mins = table.row(0).to_vec();
    let mut maxes = mins.clone();
    for row in table.rows() {
        for j in 0..p {
            mins[j] = mins[j].min(row[j]);
            maxes[j] = maxes[j].max(row[j]);
        }
    }
    Ok(ScalerParams {
        feature_names: table.feature_names().to_vec(),
        mins,
        maxes,
    })
}

/// Maps every cell to `(v - min) / (max - min)`, clamped to `[0, 1]`.
/// Constant columns map to zero.
pub fn apply_scaler<T: Scalar>(table: &FlowTable<T>, params: &ScalerParams<T>) -> Result<FlowTable<T>> {
    let p = table.n_features();
    if params.mins.len() != p || params.maxes.len() != p {
        return Err(Error::DimensionMismatch {
            expected: params.mins.len(),
            got: p,
        });
    }
    if params.feature_names.as_slice() != table.feature_names() {
        return Err(Error::invalid("scaler feature names do not match the table"));
    }
    let features = table
        .rows()
        .iter()
        .map(|row| scale_row(row, params))
        .collect();
    FlowTable::new(table.feature_names.clone(), features, table.labels.clone())
}

pub(crate) fn scale_row<T: Scalar>(row: &[T], params: &ScalerParams<T>) -> Vec<T> {
    row.iter()
        .zip(params.mins.iter().zip(&params.maxes))
        .map(|(&v, (&lo, &hi))| {
            let range = hi - lo;
            if range <= T::zero() {
                T::zero()
            } else {
                ((v - lo) / range).max(T::zero()).min(T::one())
            }
        })
        .collect()
}

/// Keeps every benign row and a uniformly drawn `attack_fraction` of the
/// malicious rows (at least one), then shuffles the result.
pub fn balance_subsample<T: Scalar>(
    table: &FlowTable<T>,
    attack_fraction: f64,
    seed: u64,
) -> Result<FlowTable<T>> {
    if !(attack_fraction > 0.0 && attack_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "attack_fraction {attack_fraction} outside (0, 1]"
        )));
    }
    if !table.has_both_classes() {
        return Err(Error::SingleClass);
    }
    let mut rng = SeededRng::new(seed);
    let (benign, malicious): (Vec<usize>, Vec<usize>) =
        (0..table.n_rows()).partition(|&i| table.labels[i] == BENIGN);
    let k = ((attack_fraction * malicious.len() as f64).round() as usize).clamp(1, malicious.len());
    let picked = rng.sample_indices(malicious.len(), k);
    let mut rows = benign;
    rows.extend(picked.into_iter().map(|i| malicious[i]));
    rng.shuffle(&mut rows);
    Ok(table.select_rows(&rows))
}

/// Disjoint train/test partition. Selected rows keep their input order.
///
/// With `stratified`, each class contributes `round(n_class * test_fraction)`
/// rows to the test side.
pub fn split<T: Scalar>(
    table: &FlowTable<T>,
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(FlowTable<T>, FlowTable<T>)> {
    let (train, test) = split_indices(table, test_fraction, seed, stratified)?;
    Ok((table.select_rows(&train), table.select_rows(&test)))
}

/// Row indices (ascending) of the `(train, test)` sides chosen by [`split`].
pub fn split_indices<T: Scalar>(
    table: &FlowTable<T>,
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "test_fraction {test_fraction} outside (0, 1)"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let n = table.n_rows();
    let mut in_test = vec![false; n];
    let groups: Vec<Vec<usize>> = if stratified {
        if !table.has_both_classes() {
            return Err(Error::SingleClass);
        }
        let (benign, malicious) = (0..n).partition(|&i| table.labels[i] == BENIGN);
        vec![benign, malicious]
    } else {
        vec![(0..n).collect()]
    };
    for group in &groups {
        let k = (group.len() as f64 * test_fraction).round() as usize;
        for pick in rng.sample_indices(group.len(), k) {
            in_test[group[pick]] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| in_test[i]);
    if test.is_empty() || train.is_empty() {
        return Err(Error::EmptyResult("split"));
    }
    Ok((train, test))
}

pub(crate) fn write_json<S: Serialize>(path: impl AsRef<Path>, value: &S) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub(crate) fn read_json<D: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<D> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}
