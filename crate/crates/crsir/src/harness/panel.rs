//! Panel ingestion: CSV parsing, per-series transforms, missing-value
//! alignment, and optional winsorization.

use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::harness::config::PanelConfig;
use crate::numerics::DataMatrix;

/// Per-series preprocessing transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformCode {
    None,
    Log,
    Diff,
    Diff2,
    LogDiff,
    LogDiff2,
}

impl FromStr for TransformCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(TransformCode::None),
            "log" => Ok(TransformCode::Log),
            "diff" => Ok(TransformCode::Diff),
            "diff2" => Ok(TransformCode::Diff2),
            "logdiff" => Ok(TransformCode::LogDiff),
            "logdiff2" => Ok(TransformCode::LogDiff2),
            other => Err(Error::UnknownTransformCode(other.to_string())),
        }
    }
}

/// A loaded, transformed, and aligned panel.
#[derive(Debug, Clone)]
pub struct LoadedPanel {
    pub data: DataMatrix,
    /// Rows removed because some series was missing there (including rows
    /// consumed by differencing).
    pub dropped_rows: usize,
}

impl LoadedPanel {
    /// Column index of a named series.
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.data
            .column_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("series '{name}' not in panel")))
    }

    /// One series as an owned vector.
    pub fn series(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self.column_index(name)?;
        Ok(self.data.values().column(idx).to_vec())
    }
}

fn csv_error(e: csv::Error, row: usize) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!("is_io_error guarantees an i/o kind"),
        }
    } else {
        Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        }
    }
}

fn checked_log(v: f64, row: usize, name: &str) -> Result<f64> {
    if v <= 0.0 {
        return Err(Error::Parse {
            row,
            column: name.to_string(),
            message: format!("log transform of non-positive value {v}"),
        });
    }
    Ok(v.ln())
}

/// Applies one transform code to a raw series. Output is aligned with the
/// input by time index; entries that cannot be computed (leading lags or
/// any missing input) come back as `None`. Row numbers in errors are
/// 1-based data rows, matching the file layout under its header.
pub fn apply_transform(
    raw: &[Option<f64>],
    code: TransformCode,
    name: &str,
) -> Result<Vec<Option<f64>>> {
    let logged: Vec<Option<f64>> = match code {
        TransformCode::Log | TransformCode::LogDiff | TransformCode::LogDiff2 => raw
            .iter()
            .enumerate()
            .map(|(i, v)| v.map(|v| checked_log(v, i + 1, name)).transpose())
            .collect::<Result<_>>()?,
        _ => raw.to_vec(),
    };
    let diff = |s: &[Option<f64>]| -> Vec<Option<f64>> {
        (0..s.len())
            .map(|i| {
                if i == 0 {
                    None
                } else {
                    match (s[i], s[i - 1]) {
                        (Some(a), Some(b)) => Some(a - b),
                        _ => None,
                    }
                }
            })
            .collect()
    };
    Ok(match code {
        TransformCode::None | TransformCode::Log => logged,
        TransformCode::Diff | TransformCode::LogDiff => diff(&logged),
        TransformCode::Diff2 | TransformCode::LogDiff2 => diff(&diff(&logged)),
    })
}

fn winsorize_column(values: &mut [f64]) {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |p: f64| -> f64 {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let q1 = quantile(0.25);
    let q3 = quantile(0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 6.0 * iqr, q3 + 6.0 * iqr);
    for v in values {
        *v = v.clamp(lo, hi);
    }
}

/// Parses the configured CSV panel, applies per-series transforms, drops
/// every row where any series is missing after transformation, and
/// optionally winsorizes.
pub fn load_panel(config: &PanelConfig) -> Result<LoadedPanel> {
    let path = config
        .data_path
        .as_deref()
        .ok_or_else(|| Error::Config("data_path is required".into()))?;
    load_panel_from(path, config)
}

/// `load_panel` with an explicit file path.
pub fn load_panel_from(path: &Path, config: &PanelConfig) -> Result<LoadedPanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(e, 0))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, 0))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::Parse {
            row: 0,
            column: String::new(),
            message: "empty header row".into(),
        });
    }
    for extra in config.transforms.keys() {
        if !names.iter().any(|n| n == extra) {
            return Err(Error::Config(format!(
                "transform listed for unknown series '{extra}'"
            )));
        }
    }

    let mut raw: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(e, i + 1))?;
        if record.len() != names.len() {
            return Err(Error::Parse {
                row: i + 1,
                column: String::new(),
                message: format!("expected {} fields, got {}", names.len(), record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let value = if field.is_empty() {
                None
            } else {
                Some(field.parse::<f64>().map_err(|_| Error::Parse {
                    row: i + 1,
                    column: names[j].clone(),
                    message: format!("not a number: '{field}'"),
                })?)
            };
            raw[j].push(value);
        }
    }
    let n_raw_rows = raw.first().map(|c| c.len()).unwrap_or(0);

    let mut transformed: Vec<Vec<Option<f64>>> = Vec::with_capacity(names.len());
    for (j, column) in raw.iter().enumerate() {
        let code = match config.transforms.get(&names[j]) {
            Some(code) => code.parse::<TransformCode>()?,
            None => TransformCode::None,
        };
        transformed.push(apply_transform(column, code, &names[j])?);
    }

    let keep: Vec<usize> = (0..n_raw_rows)
        .filter(|&i| transformed.iter().all(|c| c[i].is_some()))
        .collect();
    let dropped_rows = n_raw_rows - keep.len();

    let mut values = Array2::zeros((keep.len(), names.len()));
    for (out_i, &i) in keep.iter().enumerate() {
        for j in 0..names.len() {
            values[[out_i, j]] = transformed[j][i].unwrap();
        }
    }
    if config.winsorize {
        for j in 0..names.len() {
            let mut col: Vec<f64> = values.column(j).to_vec();
            winsorize_column(&mut col);
            for (i, v) in col.into_iter().enumerate() {
                values[[i, j]] = v;
            }
        }
    }

    let data = DataMatrix::new(values, names)?;
    Ok(LoadedPanel { data, dropped_rows })
}
