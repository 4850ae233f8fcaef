//! Dataset CSV import and export.
//!
//! Format: a header row, then one row per sample with `d` feature columns
//! followed by an integer `label` column. Feature column names are free; the
//! exporter writes `f0..f{d-1}`.

use std::path::{Path, PathBuf};

use fedshield_core::dataset::{DataError, Dataset, Sample, Splits};

pub const SPLIT_FILES: [&str; 3] = ["train.csv", "val.csv", "test.csv"];

#[derive(Debug, thiserror::Error)]
pub enum DataIoError {
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: header must have at least one feature column and a final `label` column")]
    Header { path: PathBuf },
    #[error("{path}, line {line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: DataError,
    },
    #[error("{path}: no samples")]
    Empty { path: PathBuf },
}

/// Reads one dataset file. `n_classes` bounds the label column.
pub fn read_dataset(path: &Path, n_classes: usize) -> Result<Dataset, DataIoError> {
    let csv_err = |source| DataIoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err)?;
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.len() < 2 || header.get(header.len() - 1).map(str::trim) != Some("label") {
        return Err(DataIoError::Header { path: path.to_path_buf() });
    }
    let d = header.len() - 1;
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line());
        let row_err = |message: String| DataIoError::Row {
            path: path.to_path_buf(),
            line,
            message,
        };
        let features = record
            .iter()
            .take(d)
            .map(|f| {
                let v: f64 = f.trim().parse().map_err(|_| row_err(format!("bad feature value `{f}`")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(row_err(format!("non-finite feature value `{f}`")))
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let raw_label = record.get(d).unwrap_or("");
        let label: usize = raw_label
            .trim()
            .parse()
            .map_err(|_| row_err(format!("bad label `{raw_label}`")))?;
        samples.push(Sample { features, label });
    }
    if samples.is_empty() {
        return Err(DataIoError::Empty { path: path.to_path_buf() });
    }
    Dataset::new(samples, n_classes, d).map_err(|source| DataIoError::Data {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<(), DataIoError> {
    let csv_err = |source| DataIoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = (0..data.feature_dim).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(csv_err)?;
    for s in &data.samples {
        let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        row.push(s.label.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))?;
    Ok(())
}

/// Reads `train.csv`, `val.csv` and `test.csv` from `dir`.
pub fn read_splits(dir: &Path, n_classes: usize) -> Result<Splits, DataIoError> {
    let train = read_dataset(&dir.join(SPLIT_FILES[0]), n_classes)?;
    let val = read_dataset(&dir.join(SPLIT_FILES[1]), n_classes)?;
    let test = read_dataset(&dir.join(SPLIT_FILES[2]), n_classes)?;
    for (name, d) in [(SPLIT_FILES[1], &val), (SPLIT_FILES[2], &test)] {
        if d.feature_dim != train.feature_dim {
            return Err(DataIoError::Data {
                path: dir.join(name),
                source: DataError::FeatureDim {
                    got: d.feature_dim,
                    expected: train.feature_dim,
                },
            });
        }
    }
    Ok(Splits { train, val, test })
}

pub fn write_splits(dir: &Path, splits: &Splits) -> Result<(), DataIoError> {
    write_dataset(&dir.join(SPLIT_FILES[0]), &splits.train)?;
    write_dataset(&dir.join(SPLIT_FILES[1]), &splits.val)?;
    write_dataset(&dir.join(SPLIT_FILES[2]), &splits.test)
}
