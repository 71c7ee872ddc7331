use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_atomic, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecimalSeparator {
    Point,
    Comma,
}

/// Column layout of a feature CSV. Every column other than the label is a feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvSchema {
    pub delimiter: char,
    pub decimal: DecimalSeparator,
    pub has_header: bool,
    /// 0-based index of the integer label column.
    pub label_column: usize,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            delimiter: ',',
            decimal: DecimalSeparator::Point,
            has_header: true,
            label_column: 0,
        }
    }
}

impl CsvSchema {
    fn validate(&self) -> Result<u8> {
        if !self.delimiter.is_ascii() || self.delimiter == '"' {
            return Err(Error::invalid("delimiter", "must be a single ASCII character other than '\"'"));
        }
        if self.decimal == DecimalSeparator::Comma && self.delimiter == ',' {
            return Err(Error::invalid("decimal", "comma decimals need a non-comma delimiter"));
        }
        Ok(self.delimiter as u8)
    }
}

fn csv_error(path: &Path, row: usize, column: usize, reason: impl Into<String>) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        row,
        column,
        reason: reason.into(),
    }
}

/// Loads labeled features. Rows and columns in errors are 1-based file positions.
pub fn load_csv_features(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let delimiter = schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(schema.has_header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, 0, e.to_string()))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            csv_error(path, row, 0, e.to_string())
        })?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(csv_error(
                path,
                row,
                record.len().min(expected) + 1,
                format!("expected {expected} fields, found {}", record.len()),
            ));
        }
        if schema.label_column >= record.len() {
            return Err(csv_error(path, row, schema.label_column + 1, "label column missing"));
        }
        let mut x = Vec::with_capacity(record.len() - 1);
        for (col, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if col == schema.label_column {
                let label: usize = cell
                    .parse()
                    .map_err(|_| csv_error(path, row, col + 1, format!("label {cell:?} is not a nonnegative integer")))?;
                labels.push(label);
                continue;
            }
            let text = match schema.decimal {
                DecimalSeparator::Point => std::borrow::Cow::Borrowed(cell),
                DecimalSeparator::Comma => std::borrow::Cow::Owned(cell.replace(',', ".")),
            };
            let v: f64 = text
                .parse()
                .map_err(|_| csv_error(path, row, col + 1, format!("{cell:?} is not a number")))?;
            if !v.is_finite() {
                return Err(csv_error(path, row, col + 1, "non-finite value"));
            }
            x.push(v);
        }
        features.push(x);
    }
    let dim = width.map_or(0, |w| w - 1);
    Dataset::new(dim, features, labels)
}

/// Writes the label first, then features, honouring the schema's separators.
pub fn write_csv_features(data: &Dataset, path: &Path, schema: &CsvSchema) -> Result<()> {
    let delimiter = schema.validate()?;
    let mut writer = csv::WriterBuilder::new().delimiter(delimiter).from_writer(Vec::new());
    let fmt = |v: f64| {
        let s = v.to_string();
        match schema.decimal {
            DecimalSeparator::Point => s,
            DecimalSeparator::Comma => s.replace('.', ","),
        }
    };
    let csv_err = |e: csv::Error| csv_error(path, 0, 0, e.to_string());
    let label_pos = schema.label_column.min(data.input_dim);
    if schema.has_header {
        let mut header: Vec<String> = (0..data.input_dim).map(|k| format!("f{k}")).collect();
        header.insert(label_pos, "label".into());
        writer.write_record(&header).map_err(csv_err)?;
    }
    for (x, &y) in data.features.iter().zip(&data.labels) {
        let mut row: Vec<String> = x.iter().map(|&v| fmt(v)).collect();
        row.insert(label_pos, y.to_string());
        writer.write_record(&row).map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| csv_error(path, 0, 0, e.to_string()))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn one_row_and_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "label,a,b\n2,0.5,-1\n");
        let d = load_csv_features(&p, &CsvSchema::default()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.features[0], vec![0.5, -1.0]);
        assert_eq!(d.labels, vec![2]);
        let p = write(&dir, "b.csv", "label,a,b\n");
        let d = load_csv_features(&p, &CsvSchema::default()).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn bad_cell_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "label,a,b\n0,1,2\n1,3,oops\n");
        match load_csv_features(&p, &CsvSchema::default()).unwrap_err() {
            Error::Csv { row, column, .. } => assert_eq!((row, column), (3, 3)),
            e => panic!("{e:?}"),
        }
        let p = write(&dir, "b.csv", "label,a\n-1,2\n");
        assert!(matches!(
            load_csv_features(&p, &CsvSchema::default()),
            Err(Error::Csv { row: 2, column: 1, .. })
        ));
        let p = write(&dir, "c.csv", "label,a\n1,2\n1,2,3\n");
        assert!(matches!(load_csv_features(&p, &CsvSchema::default()), Err(Error::Csv { row: 3, .. })));
    }

    #[test]
    fn semicolon_and_decimal_comma() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "1,5;2;0\n");
        let schema = CsvSchema {
            delimiter: ';',
            decimal: DecimalSeparator::Comma,
            has_header: false,
            label_column: 2,
        };
        let d = load_csv_features(&p, &schema).unwrap();
        assert_eq!(d.features, vec![vec![1.5, 2.0]]);
        assert_eq!(d.labels, vec![0]);
    }

    #[test]
    fn write_then_load_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.csv");
        let feats: Vec<Vec<f64>> = (0..50)
            .map(|i| (0..4).map(|k| ((i * 4 + k) as f32 * 0.37 - 11.0) as f64).collect())
            .collect();
        let d = Dataset::new(4, feats, (0..50).map(|i| i % 5).collect()).unwrap();
        for schema in [
            CsvSchema::default(),
            CsvSchema {
                delimiter: '\t',
                decimal: DecimalSeparator::Comma,
                has_header: false,
                label_column: 4,
            },
        ] {
            write_csv_features(&d, &p, &schema).unwrap();
            let back = load_csv_features(&p, &schema).unwrap();
            assert_eq!(back.labels, d.labels);
            for (a, b) in back.features.iter().flatten().zip(d.features.iter().flatten()) {
                assert_eq!(*a as f32, *b as f32);
            }
        }
    }

    #[test]
    fn ambiguous_schema_rejected() {
        let schema = CsvSchema {
            decimal: DecimalSeparator::Comma,
            ..CsvSchema::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x\n");
        assert!(load_csv_features(&p, &schema).is_err());
    }
}
