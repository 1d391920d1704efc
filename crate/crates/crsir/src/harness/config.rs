//! Evaluation configuration, read from a TOML file with CLI overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_horizons() -> Vec<usize> {
    vec![1, 2, 4]
}

fn default_window() -> usize {
    100
}

fn default_alpha() -> f64 {
    0.05
}

fn default_one() -> usize {
    1
}

/// Hyperparameter grid searched by cross-validation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CvGrid {
    pub c: Vec<usize>,
    pub tau: Vec<f64>,
}

impl Default for CvGrid {
    fn default() -> Self {
        CvGrid {
            c: vec![1, 5, 10, 20, 30],
            tau: vec![0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0],
        }
    }
}

impl CvGrid {
    /// Grid points in deterministic search order: c values as listed, each
    /// crossed with the shrinkage values as listed.
    pub fn points(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(self.c.len() * self.tau.len());
        for &c in &self.c {
            for &tau in &self.tau {
                out.push((c, tau));
            }
        }
        out
    }
}

/// Everything the evaluation harness needs: data location, per-series
/// transforms, targets and horizons, window geometry, and the CV grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelConfig {
    /// Delimited panel file: header row of series names, one column per
    /// series, rows in time order, empty fields for missing values.
    pub data_path: Option<PathBuf>,
    /// Series to forecast; each must be a panel column.
    #[serde(default)]
    pub forecast_targets: Vec<String>,
    /// Forecast horizons in rows.
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    /// Rolling estimation window length.
    #[serde(default = "default_window")]
    pub window_length: usize,
    /// Slice count for both inverse-regression stages; derived from the
    /// window when absent.
    pub slices: Option<usize>,
    /// Significance level of the sequential dimension tests.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Seed for anything stochastic (simulation, synthetic panels).
    #[serde(default)]
    pub seed: u64,
    /// Clamp each transformed series at 6 interquartile ranges beyond the
    /// quartiles before fitting.
    #[serde(default)]
    pub winsorize: bool,
    /// Evaluate every n-th forecast origin (1 = every origin).
    #[serde(default = "default_one")]
    pub eval_stride: usize,
    /// Re-run cross-validation every n-th evaluated origin, reusing the
    /// previous choice in between (1 = every origin).
    #[serde(default = "default_one")]
    pub cv_refresh: usize,
    #[serde(default)]
    pub cv_grid: CvGrid,
    /// Per-series transform code: none, log, diff, diff2, logdiff,
    /// logdiff2. Unlisted series stay untransformed.
    #[serde(default)]
    pub transforms: BTreeMap<String, String>,
}

impl Default for PanelConfig {
    fn default() -> Self {
        PanelConfig {
            data_path: None,
            forecast_targets: Vec::new(),
            horizons: default_horizons(),
            window_length: default_window(),
            slices: None,
            alpha: default_alpha(),
            seed: 0,
            winsorize: false,
            eval_stride: 1,
            cv_refresh: 1,
            cv_grid: CvGrid::default(),
            transforms: BTreeMap::new(),
        }
    }
}

impl PanelConfig {
    /// Reads and validates a TOML config file.
    pub fn load(path: &Path) -> Result<Self> {
        let body = fs::read_to_string(path)?;
        let config: PanelConfig =
            toml::from_str(&body).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Slice count used for fitting: configured value, or
    /// `min(10, window/4)`.
    pub fn effective_slices(&self) -> usize {
        self.slices.unwrap_or((self.window_length / 4).min(10))
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_length < 40 {
            return Err(Error::Config(format!(
                "window_length must be at least 40, got {}",
                self.window_length
            )));
        }
        if self.horizons.is_empty() {
            return Err(Error::Config("horizons must be non-empty".into()));
        }
        if self.horizons.contains(&0) {
            return Err(Error::Config("horizons must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.eval_stride == 0 || self.cv_refresh == 0 {
            return Err(Error::Config(
                "eval_stride and cv_refresh must be positive".into(),
            ));
        }
        if let Some(s) = self.slices {
            if s < 2 {
                return Err(Error::Config(format!("slices must be at least 2, got {s}")));
            }
        }
        if self.cv_grid.c.is_empty() || self.cv_grid.tau.is_empty() {
            return Err(Error::Config("cv_grid must list c and tau values".into()));
        }
        if self.cv_grid.c.contains(&0) {
            return Err(Error::Config("cv_grid c values must be positive".into()));
        }
        if self.cv_grid.tau.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return Err(Error::Config(
                "cv_grid tau values must lie in [0, 1]".into(),
            ));
        }
        for h in &self.horizons {
            if self.window_length < 2 * self.effective_slices() + h + 3 {
                return Err(Error::Config(format!(
                    "window_length {} too small for horizon {h} with {} slices",
                    self.window_length,
                    self.effective_slices()
                )));
            }
        }
        Ok(())
    }
}
