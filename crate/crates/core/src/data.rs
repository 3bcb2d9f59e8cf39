//! Tabular feature data: CSV ingestion and row access.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// A single cell. Numeric cells are finite reals; anything that does not parse
/// as one is kept as text for categorical `==` tests.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Num(f64),
    Text(Box<str>),
}

impl Value {
    /// Parses a raw CSV cell. Non-finite numerics (`nan`, `inf`) are kept as
    /// text so they fail numeric comparisons instead of silently never hitting.
    pub fn parse(raw: &str) -> Value {
        let trimmed = raw.trim();
        match trimmed.parse::<f64>() {
            Ok(x) if x.is_finite() => Value::Num(x),
            _ => Value::Text(trimmed.into()),
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Text(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(x) => write!(f, "{x}"),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.into())
    }
}

/// Keyed access to a sample's feature values.
pub trait Record {
    fn value(&self, feature: &str) -> Option<&Value>;
}

impl Record for HashMap<String, Value> {
    fn value(&self, feature: &str) -> Option<&Value> {
        self.get(feature)
    }
}

impl Record for BTreeMap<String, Value> {
    fn value(&self, feature: &str) -> Option<&Value> {
        self.get(feature)
    }
}

impl Record for [(&str, Value)] {
    fn value(&self, feature: &str) -> Option<&Value> {
        self.iter().find(|(k, _)| *k == feature).map(|(_, v)| v)
    }
}

/// A borrowed dataset row that resolves feature names through its header.
#[derive(Clone, Copy, Debug)]
pub struct RowRef<'a> {
    names: &'a [String],
    cells: &'a [Value],
}

impl<'a> RowRef<'a> {
    pub fn cells(&self) -> &'a [Value] {
        self.cells
    }
}

impl Record for RowRef<'_> {
    fn value(&self, feature: &str) -> Option<&Value> {
        self.names
            .iter()
            .position(|n| n == feature)
            .map(|i| &self.cells[i])
    }
}

/// Row-major feature table with an optional label column held apart.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    cells: Vec<Value>,
    labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(names: Vec<String>) -> Self {
        Dataset {
            names,
            cells: Vec::new(),
            labels: None,
        }
    }

    pub fn with_labels(names: Vec<String>) -> Self {
        Dataset {
            names,
            cells: Vec::new(),
            labels: Some(Vec::new()),
        }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        if self.names.is_empty() {
            0
        } else {
            self.cells.len() / self.names.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn column_index(&self, feature: &str) -> Option<usize> {
        self.names.iter().position(|n| n == feature)
    }

    pub fn row(&self, i: usize) -> &[Value] {
        let w = self.width();
        &self.cells[i * w..(i + 1) * w]
    }

    pub fn row_ref(&self, i: usize) -> RowRef<'_> {
        RowRef {
            names: &self.names,
            cells: self.row(i),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Value]> + '_ {
        self.cells.chunks_exact(self.width().max(1))
    }

    /// Appends a row. Panics if the width is wrong or the label presence
    /// disagrees with how the dataset was constructed.
    pub fn push_row(&mut self, row: Vec<Value>, label: Option<String>) {
        assert_eq!(row.len(), self.width(), "row width mismatch");
        self.cells.extend(row);
        match (&mut self.labels, label) {
            (Some(labels), Some(l)) => labels.push(l),
            (None, None) => {}
            _ => panic!("label presence mismatch"),
        }
    }

    pub fn push_numeric(&mut self, row: &[f64], label: Option<String>) {
        self.push_row(row.iter().map(|&x| Value::Num(x)).collect(), label);
    }

    /// Builds a dataset from the given row indices, in order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let mut out = Dataset {
            names: self.names.clone(),
            cells: Vec::with_capacity(rows.len() * self.width()),
            labels: self.labels.as_ref().map(|_| Vec::with_capacity(rows.len())),
        };
        for &r in rows {
            out.cells.extend_from_slice(self.row(r));
            if let (Some(dst), Some(src)) = (&mut out.labels, &self.labels) {
                dst.push(src[r].clone());
            }
        }
        out
    }

    /// Reads a CSV with a header row. When `label_column` is given, that
    /// column must exist and is stored as labels rather than a feature.
    pub fn from_csv_reader<R: Read>(reader: R, label_column: Option<&str>) -> Result<Dataset> {
        Self::collect_rows(CsvRows::new(reader, label_column, true)?)
    }

    pub fn from_csv_path(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file), label_column)
    }

    /// Like [`Dataset::from_csv_path`], but a missing label column is not an
    /// error: the dataset is then unlabeled.
    pub fn load(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::collect_rows(CsvRows::new(file, Some(label_column), false)?)
    }

    fn collect_rows<R: Read>(mut rows: CsvRows<R>) -> Result<Dataset> {
        let names = rows.feature_names().to_vec();
        let mut ds = if rows.has_labels() {
            Dataset::with_labels(names)
        } else {
            Dataset::new(names)
        };
        while let Some(row) = rows.next_row() {
            let (values, label) = row?;
            ds.push_row(values, label);
        }
        Ok(ds)
    }

    /// Writes the dataset as CSV; the label column, if any, goes last under
    /// `label_name`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W, label_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        if self.labels.is_some() {
            header.push(label_name);
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(ToString::to_string).collect();
            if let Some(labels) = &self.labels {
                rec.push(labels[i].clone());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Row-at-a-time CSV reader. A named label column is split off from the
/// features.
pub struct CsvRows<R: Read> {
    rdr: csv::Reader<R>,
    header: Vec<String>,
    names: Vec<String>,
    label_idx: Option<usize>,
    record: csv::StringRecord,
    line: usize,
}

impl<R: Read> CsvRows<R> {
    /// With `require_label`, a missing label column is a configuration error;
    /// otherwise the rows are simply unlabeled.
    pub fn new(reader: R, label_column: Option<&str>, require_label: bool) -> Result<CsvRows<R>> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let label_idx = label_column.and_then(|name| header.iter().position(|h| h == name));
        if let (Some(name), None, true) = (label_column, label_idx, require_label) {
            return Err(Error::InvalidConfig(format!(
                "label column `{name}` not found in header"
            )));
        }
        let names = header
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != label_idx)
            .map(|(_, h)| h.clone())
            .collect();
        Ok(CsvRows {
            rdr,
            header,
            names,
            label_idx,
            record: csv::StringRecord::new(),
            line: 0,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn has_labels(&self) -> bool {
        self.label_idx.is_some()
    }

    /// The next row's feature values and label. Empty cells are errors.
    pub fn next_row(&mut self) -> Option<Result<(Vec<Value>, Option<String>)>> {
        match self.rdr.read_record(&mut self.record) {
            Ok(false) => return None,
            Err(e) => return Some(Err(e.into())),
            Ok(true) => {}
        }
        self.line += 1;
        let mut row = Vec::with_capacity(self.names.len());
        let mut label = None;
        for (i, cell) in self.record.iter().enumerate() {
            if Some(i) == self.label_idx {
                label = Some(cell.to_owned());
            } else if cell.is_empty() {
                return Some(Err(Error::NonNumeric {
                    feature: self.header[i].clone(),
                    value: format!("<empty> (data row {})", self.line),
                }));
            } else {
                row.push(Value::parse(cell));
            }
        }
        Some(Ok((row, label)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_label_column() {
        let text = "x1,label,x2\n1.5,a,2\n-3,b,0.25\n";
        let ds = Dataset::from_csv_reader(text.as_bytes(), Some("label")).unwrap();
        assert_eq!(ds.feature_names(), ["x1", "x2"]);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.row(1), [Value::Num(-3.0), Value::Num(0.25)]);
        assert_eq!(ds.labels().unwrap(), ["a", "b"]);
    }

    #[test]
    fn missing_label_column_is_config_error() {
        let err = Dataset::from_csv_reader("x\n1\n".as_bytes(), Some("y")).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn optional_label_column() {
        let mut rows = CsvRows::new("x,y\n1,2\n".as_bytes(), Some("label"), false).unwrap();
        assert!(!rows.has_labels());
        assert_eq!(rows.feature_names(), ["x", "y"]);
        let (row, label) = rows.next_row().unwrap().unwrap();
        assert_eq!(row, [Value::Num(1.0), Value::Num(2.0)]);
        assert_eq!(label, None);
        assert!(rows.next_row().is_none());
    }

    #[test]
    fn empty_cell_is_hard_error() {
        let err = Dataset::from_csv_reader("x,y\n1,\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::NonNumeric { .. }));
    }

    #[test]
    fn text_and_non_finite_cells_stay_text() {
        assert_eq!(Value::parse("tcp"), Value::Text("tcp".into()));
        assert_eq!(Value::parse("NaN"), Value::Text("NaN".into()));
        assert_eq!(Value::parse(" 4e-3 "), Value::Num(0.004));
    }

    #[test]
    fn csv_round_trip() {
        let mut ds = Dataset::with_labels(vec!["a".into(), "b".into()]);
        ds.push_numeric(&[0.1, 2.0], Some("0".into()));
        ds.push_numeric(&[1e-9, -7.25], Some("1".into()));
        let mut buf = Vec::new();
        ds.write_csv(&mut buf, "label").unwrap();
        let back = Dataset::from_csv_reader(buf.as_slice(), Some("label")).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn select_keeps_labels_aligned() {
        let mut ds = Dataset::with_labels(vec!["a".into()]);
        for i in 0..5 {
            ds.push_numeric(&[i as f64], Some(format!("l{i}")));
        }
        let sub = ds.select(&[4, 1]);
        assert_eq!(sub.row(0), [Value::Num(4.0)]);
        assert_eq!(sub.labels().unwrap(), ["l4", "l1"]);
    }
}
