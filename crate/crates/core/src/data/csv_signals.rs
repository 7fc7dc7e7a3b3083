use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Heartbeat categories, in label order.
pub const MITBIH_CLASSES: [&str; 5] = ["N", "S", "V", "F", "Q"];

const MITBIH_STEPS: usize = 187;
const IONOSPHERE_ATTRS: usize = 34;

/// Column layout of a signal table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CsvSchema {
    /// No header; 187 samples then a numeric class 0–4. Gives `[n, 187, 1]`.
    Mitbih,
    /// No header; 34 attributes then `b` or `g`. Gives `[n, 17, 2]`, pulse-major.
    Ionosphere,
    /// Header row; every column except `label_col` is a feature. Gives `[n, m, 1]`,
    /// classes are the distinct label tokens in sorted order.
    Generic { label_col: String },
}

impl CsvSchema {
    pub fn name(&self) -> &str {
        match self {
            CsvSchema::Mitbih => "mitbih",
            CsvSchema::Ionosphere => "ionosphere",
            CsvSchema::Generic { .. } => "generic",
        }
    }
}

fn parse_value(path: &Path, row: usize, column: usize, field: &str) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message: format!("expected a number, found {:?}", field.trim()),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row,
            column,
            message: "non-finite value".into(),
        });
    }
    Ok(v)
}

/// Rows and columns in error messages are 1-based.
pub fn load_csv_signals(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(matches!(schema, CsvSchema::Generic { .. }))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{}: {other:?}", path.display())),
        })?;

    let (width, label_col) = match schema {
        CsvSchema::Mitbih => (MITBIH_STEPS + 1, MITBIH_STEPS),
        CsvSchema::Ionosphere => (IONOSPHERE_ATTRS + 1, IONOSPHERE_ATTRS),
        CsvSchema::Generic { label_col } => {
            let headers = reader.headers()?.clone();
            let pos = headers.iter().position(|h| h == label_col).ok_or_else(|| {
                Error::Schema(format!("{}: no column named {label_col:?}", path.display()))
            })?;
            (headers.len(), pos)
        }
    };

    let mut features = Vec::new();
    let mut tokens = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() == 1 && record.get(0).is_some_and(str::is_empty) {
            continue;
        }
        if record.len() != width {
            return Err(Error::Schema(format!(
                "{}: row {row} has {} columns, the {} layout needs {width}",
                path.display(),
                record.len(),
                schema.name()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            if c != label_col {
                features.push(parse_value(path, row, c + 1, field)?);
            }
        }
        tokens.push((row, record[label_col].to_string()));
    }
    if tokens.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    let n = tokens.len();
    let m = width - 1;

    let unknown = |row: usize, tok: &str| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: label_col + 1,
        message: format!("unknown label {tok:?}"),
    };
    let (labels, class_names, shape) = match schema {
        CsvSchema::Mitbih => {
            let labels = tokens
                .iter()
                .map(|(row, tok)| match tok.parse::<f64>() {
                    Ok(v) if v.fract() == 0.0 && (0.0..5.0).contains(&v) => Ok(v as usize),
                    _ => Err(unknown(*row, tok)),
                })
                .collect::<Result<Vec<_>>>()?;
            let names = MITBIH_CLASSES.iter().map(|s| s.to_string()).collect();
            (labels, names, vec![n, MITBIH_STEPS, 1])
        }
        CsvSchema::Ionosphere => {
            let labels = tokens
                .iter()
                .map(|(row, tok)| match tok.as_str() {
                    "b" => Ok(0),
                    "g" => Ok(1),
                    _ => Err(unknown(*row, tok)),
                })
                .collect::<Result<Vec<_>>>()?;
            (
                labels,
                vec!["b".into(), "g".into()],
                vec![n, IONOSPHERE_ATTRS / 2, 2],
            )
        }
        CsvSchema::Generic { .. } => {
            let mut names: Vec<String> = tokens.iter().map(|(_, t)| t.clone()).collect();
            names.sort();
            names.dedup();
            let labels = tokens
                .iter()
                .map(|(_, t)| names.binary_search(t).expect("token collected above"))
                .collect();
            (labels, names, vec![n, m, 1])
        }
    };
    Dataset::new(Tensor::new(shape, features)?, labels, class_names)
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn mitbih_row(label: usize, fill: f64) -> String {
        let mut parts: Vec<String> = (0..187)
            .map(|i| format!("{}", fill + i as f64 * 1e-3))
            .collect();
        parts.push(format!("{label}.0"));
        parts.join(",")
    }

    #[test]
    fn mitbih_shape() {
        let text = [mitbih_row(0, 0.1), mitbih_row(4, 0.2), mitbih_row(2, 0.3)].join("\n");
        let f = write(&text);
        let ds = load_csv_signals(f.path(), &CsvSchema::Mitbih).unwrap();
        assert_eq!(ds.features().shape(), &[3, 187, 1]);
        assert_eq!(ds.labels(), &[0, 4, 2]);
        assert_eq!(ds.class_names()[4], "Q");
        assert!((ds.features().data()[187 + 1] - 0.201).abs() < 1e-15);
    }

    #[test]
    fn ionosphere_row() {
        let vals: Vec<String> = (0..34).map(|i| format!("{}", i as f64 / 100.0)).collect();
        let f = write(&format!("{},g\n{},b\n", vals.join(","), vals.join(",")));
        let ds = load_csv_signals(f.path(), &CsvSchema::Ionosphere).unwrap();
        assert_eq!(ds.features().shape(), &[2, 17, 2]);
        assert_eq!(ds.labels(), &[1, 0]);
        // pulse 3 holds attributes 7 and 8
        assert_eq!(&ds.features().data()[6..8], &[0.06, 0.07]);
    }

    #[test]
    fn non_numeric_feature_names_row_and_column() {
        let mut row: Vec<String> = (0..34).map(|_| "0.5".to_string()).collect();
        row[4] = "oops".into();
        let good: Vec<String> = (0..34).map(|_| "0.5".to_string()).collect();
        let f = write(&format!("{},g\n{},b\n", good.join(","), row.join(",")));
        match load_csv_signals(f.path(), &CsvSchema::Ionosphere) {
            Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 5)),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_label_rejected() {
        let vals: Vec<String> = (0..34).map(|_| "0".to_string()).collect();
        let f = write(&format!("{},x\n", vals.join(",")));
        assert!(matches!(
            load_csv_signals(f.path(), &CsvSchema::Ionosphere),
            Err(Error::Parse { column: 35, .. })
        ));
        let f = write(&mitbih_row(7, 0.0));
        assert!(load_csv_signals(f.path(), &CsvSchema::Mitbih).is_err());
    }

    #[test]
    fn wrong_layout_is_a_schema_error() {
        let vals: Vec<String> = (0..34).map(|_| "0".to_string()).collect();
        let f = write(&format!("{},g\n", vals.join(",")));
        assert!(matches!(
            load_csv_signals(f.path(), &CsvSchema::Mitbih),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn generic_schema() {
        let f = write("a,kind,b\n1,cat,2\n3,dog,4\n5,cat,6\n");
        let schema = CsvSchema::Generic {
            label_col: "kind".into(),
        };
        let ds = load_csv_signals(f.path(), &schema).unwrap();
        assert_eq!(ds.features().shape(), &[3, 2, 1]);
        assert_eq!(ds.features().data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.class_names(), &["cat".to_string(), "dog".to_string()]);
        let missing = CsvSchema::Generic {
            label_col: "nope".into(),
        };
        assert!(matches!(
            load_csv_signals(f.path(), &missing),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_csv_signals(Path::new("/nonexistent/x.csv"), &CsvSchema::Mitbih),
            Err(Error::Io { .. })
        ));
    }
}
