//! Rolling pseudo out-of-sample evaluation: autoregressive partialling-out,
//! gapped cross-validation over the (c, tau) grid, origin-by-origin
//! forecasts, and report assembly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{s, Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ar4_forecast, dfm5_forecast, ols_rank_guarded};
use crate::error::{Error, Result};
use crate::harness::config::{CvGrid, PanelConfig};
use crate::harness::panel::LoadedPanel;
use crate::numerics::DataMatrix;
use crate::pipeline::crsir_fit;

/// Root mean squared error of paired forecasts and outcomes.
pub fn rmse(pred: &[f64], obs: &[f64]) -> Result<f64> {
    if pred.len() != obs.len() {
        return Err(Error::LengthMismatch(pred.len(), obs.len()));
    }
    if pred.is_empty() {
        return Err(Error::Domain("rmse of empty sequences".into()));
    }
    let sse: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum();
    Ok((sse / pred.len() as f64).sqrt())
}

const AR_LAGS: usize = 4;

/// Window data after partialling the target's own autoregression out of
/// both sides: pairs `(x_resid[t], y_resid[t + h])` for the window rows
/// where all lags and the lead exist, re-indexed from zero, plus the
/// residualized predictors at the window's final row for forecasting.
#[derive(Debug, Clone)]
pub(crate) struct Residualized {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub x_end: Array1<f64>,
}

pub(crate) fn residualize(x: ArrayView2<f64>, y: &[f64], h: usize) -> Result<Residualized> {
    let w = y.len();
    if x.nrows() != w {
        return Err(Error::LengthMismatch(x.nrows(), w));
    }
    if h == 0 {
        return Err(Error::Domain("horizon must be positive".into()));
    }
    let lag_rows = AR_LAGS - 1;
    let n = w.saturating_sub(h + lag_rows);
    if n < 2 {
        return Err(Error::TooShort {
            need: h + lag_rows + 2,
            got: w,
        });
    }
    let regressors = |t: usize| -> Vec<f64> { (0..AR_LAGS).map(|lag| y[t - lag]).collect() };
    let mut design = Array2::zeros((n, AR_LAGS));
    for (row, t) in (lag_rows..(w - h)).enumerate() {
        for (col, v) in regressors(t).into_iter().enumerate() {
            design[[row, col]] = v;
        }
    }

    let y_lead: Vec<f64> = (lag_rows..(w - h)).map(|t| y[t + h]).collect();
    let (fit, _) = ols_rank_guarded(&design, &y_lead, "own lags")?;
    let mut y_resid = Vec::with_capacity(n);
    for (row, target) in y_lead.iter().enumerate() {
        let pred = fit.predict(design.row(row).as_slice().unwrap())?;
        y_resid.push(target - pred);
    }

    let p = x.ncols();
    let mut x_resid = Array2::zeros((n, p));
    let mut x_end = Array1::zeros(p);
    let end_regressors = regressors(w - 1);
    for j in 0..p {
        let target: Vec<f64> = (lag_rows..(w - h)).map(|t| x[[t, j]]).collect();
        let (fit, _) = ols_rank_guarded(&design, &target, "own lags")?;
        for row in 0..n {
            let pred = fit.predict(design.row(row).as_slice().unwrap())?;
            x_resid[[row, j]] = target[row] - pred;
        }
        x_end[j] = x[[w - 1, j]] - fit.predict(&end_regressors)?;
    }

    Ok(Residualized {
        x: x_resid,
        y: y_resid,
        x_end,
    })
}

/// Training indices for leave-surroundings-out validation at index `i`:
/// every j with `|j - i| >= 2h + 3`, so nothing within `2h + 2` of the
/// held-out pair leaks in.
pub(crate) fn gapped_train_indices(i: usize, n: usize, h: usize) -> Vec<usize> {
    let gap = 2 * h + 3;
    (0..n).filter(|&j| j.abs_diff(i) >= gap).collect()
}

/// The hyperparameters chosen by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvChoice {
    pub c: usize,
    pub tau: f64,
}

/// Picks the best candidate: smallest loss, ties broken by smaller c,
/// then by larger shrinkage. `None` losses mark disqualified points.
pub(crate) fn select_best(candidates: &[(Option<f64>, usize, f64)]) -> Option<CvChoice> {
    let mut best: Option<(f64, usize, f64)> = None;
    for &(loss, c, tau) in candidates {
        let Some(loss) = loss else { continue };
        let better = match best {
            None => true,
            Some((bl, bc, bt)) => {
                loss < bl || (loss == bl && (c < bc || (c == bc && tau > bt)))
            }
        };
        if better {
            best = Some((loss, c, tau));
        }
    }
    best.map(|(_, c, tau)| CvChoice { c, tau })
}

/// Grid search over (c, tau) by leave-surroundings-out forecasting on the
/// residualized window. A grid point failing on more than 10% of held-out
/// indices is disqualified; if every point is disqualified this errors.
pub fn cross_validate(
    x: ArrayView2<f64>,
    y: &[f64],
    h: usize,
    grid: &CvGrid,
    slices: usize,
    alpha: f64,
) -> Result<CvChoice> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::Config("empty cross-validation grid".into()));
    }
    if points.len() == 1 {
        return Ok(CvChoice {
            c: points[0].0,
            tau: points[0].1,
        });
    }
    let res = residualize(x, y, h)?;
    let n = res.y.len();
    let names: Vec<String> = (0..res.x.ncols()).map(|j| format!("x{}", j + 1)).collect();

    let candidates: Vec<(Option<f64>, usize, f64)> = points
        .par_iter()
        .map(|&(c, tau)| {
            let mut sse = 0.0;
            let mut fails = 0usize;
            let mut used = 0usize;
            for i in 0..n {
                let train = gapped_train_indices(i, n, h);
                if train.len() < 2 * slices {
                    fails += 1;
                    continue;
                }
                let mut xt = Array2::zeros((train.len(), res.x.ncols()));
                let mut yt = Vec::with_capacity(train.len());
                for (dst, &src) in train.iter().enumerate() {
                    xt.row_mut(dst).assign(&res.x.row(src));
                    yt.push(res.y[src]);
                }
                let fit = DataMatrix::new(xt, names.clone())
                    .and_then(|dm| crsir_fit(&dm, &yt, c, tau, slices, alpha));
                match fit {
                    Ok(model) => {
                        match model.predict(res.x.slice(s![i..i + 1, ..])) {
                            Ok(pred) => {
                                let err = pred[0] - res.y[i];
                                sse += err * err;
                                used += 1;
                            }
                            Err(_) => fails += 1,
                        }
                    }
                    Err(_) => fails += 1,
                }
            }
            let loss = if fails * 10 > n || used == 0 {
                None
            } else {
                Some(sse / used as f64)
            };
            (loss, c, tau)
        })
        .collect();

    select_best(&candidates)
        .ok_or_else(|| Error::Domain("every cross-validation grid point failed".into()))
}

/// Forecasts of each method from one origin, using only rows up to and
/// including the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginForecast {
    pub crsir: f64,
    pub ar4: f64,
    pub dfm5: f64,
}

/// Direct h-step forecasts from `origin` over the trailing window: the
/// autoregressive forecast plus a fitted correction from the residualized
/// predictors, next to the plain AR(4) and diffusion-index baselines.
#[allow(clippy::too_many_arguments)]
pub fn forecast_at_origin(
    x: ArrayView2<f64>,
    y: &[f64],
    origin: usize,
    h: usize,
    window: usize,
    choice: CvChoice,
    slices: usize,
    alpha: f64,
) -> Result<OriginForecast> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch(x.nrows(), y.len()));
    }
    if origin + 1 < window || origin >= y.len() {
        return Err(Error::TooFewObservations {
            need: window,
            got: origin + 1,
        });
    }
    let lo = origin + 1 - window;
    let xw = x.slice(s![lo..=origin, ..]);
    let yw = &y[lo..=origin];

    let ar = ar4_forecast(yw, h)?;
    let dfm = dfm5_forecast(xw, yw, h)?;

    let res = residualize(xw, yw, h)?;
    let names: Vec<String> = (0..res.x.ncols()).map(|j| format!("x{}", j + 1)).collect();
    let dm = DataMatrix::new(res.x.clone(), names)?;
    let model = crsir_fit(&dm, &res.y, choice.c, choice.tau, slices, alpha)?;
    let correction = model.predict(res.x_end.view().insert_axis(ndarray::Axis(0)))?[0];

    Ok(OriginForecast {
        crsir: ar.value + correction,
        ar4: ar.value,
        dfm5: dfm.value,
    })
}

/// Forecasting method labels used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Crsir,
    Ar4,
    Dfm5,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Crsir => "crsir",
            Method::Ar4 => "ar4",
            Method::Dfm5 => "dfm5",
        }
    }
}

/// One method's accuracy on one target series at one horizon.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesRecord {
    pub series: String,
    pub horizon: usize,
    pub method: Method,
    pub rmse: f64,
    /// RMSE divided by the AR(4) RMSE on identical dates; exactly 1 for
    /// AR(4) itself.
    pub relative_rmse: f64,
    /// Modal cross-validation choice over evaluated origins.
    pub c: Option<usize>,
    pub tau: Option<f64>,
}

/// A (series, horizon) pair that could not be evaluated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalFailure {
    pub series: String,
    pub horizon: usize,
    pub message: String,
}

/// Full evaluation output: per-series records, failures, and the inputs
/// needed to lay out summary tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<SeriesRecord>,
    pub failures: Vec<EvalFailure>,
    pub horizons: Vec<usize>,
    pub window: usize,
    pub n_origins: BTreeMap<usize, usize>,
}

pub(crate) const REPORT_QUANTILES: [f64; 5] = [0.05, 0.25, 0.50, 0.75, 0.95];

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl EvalReport {
    fn relative_rmses(&self, horizon: usize, method: Method) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.horizon == horizon && r.method == method)
            .map(|r| r.relative_rmse)
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// The five report quantiles of relative RMSE across series.
    pub fn percentiles(&self, horizon: usize, method: Method) -> Option<[f64; 5]> {
        let v = self.relative_rmses(horizon, method);
        if v.is_empty() {
            return None;
        }
        let mut out = [0.0; 5];
        for (slot, p) in out.iter_mut().zip(REPORT_QUANTILES) {
            *slot = quantile(&v, p);
        }
        Some(out)
    }

    /// (series beating AR(4), series evaluated) for one method.
    pub fn beats_ar4(&self, horizon: usize, method: Method) -> (usize, usize) {
        let v = self.relative_rmses(horizon, method);
        (v.iter().filter(|&&r| r < 1.0).count(), v.len())
    }

    /// Records as CSV, one row per (series, horizon, method).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("series,horizon,method,rmse,relative_rmse,c,tau\n");
        for r in &self.records {
            let c = r.c.map(|v| v.to_string()).unwrap_or_default();
            let tau = r.tau.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.series,
                r.horizon,
                r.method.as_str(),
                r.rmse,
                r.relative_rmse,
                c,
                tau
            );
        }
        out
    }

    /// Summary tables: per horizon, the relative-RMSE quantiles across
    /// series and the counts of series beating AR(4).
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Rolling evaluation\n");
        let _ = writeln!(
            out,
            "\nWindow {} rows; origins per horizon: {}.\n",
            self.window,
            self.horizons
                .iter()
                .map(|h| format!("h={}: {}", h, self.n_origins.get(h).copied().unwrap_or(0)))
                .collect::<Vec<_>>()
                .join(", ")
        );
        for &h in &self.horizons {
            let _ = writeln!(out, "## Horizon {h}\n");
            let _ = writeln!(out, "Relative RMSE across series (AR(4) = 1):\n");
            let _ = writeln!(out, "| quantile | crsir | dfm5 |");
            let _ = writeln!(out, "|---|---|---|");
            let crsir = self.percentiles(h, Method::Crsir);
            let dfm = self.percentiles(h, Method::Dfm5);
            for (row, p) in REPORT_QUANTILES.iter().enumerate() {
                let fmt = |v: Option<[f64; 5]>| {
                    v.map(|q| format!("{:.3}", q[row])).unwrap_or_else(|| "-".into())
                };
                let _ = writeln!(out, "| {:.3} | {} | {} |", p, fmt(crsir), fmt(dfm));
            }
            let (cw, cn) = self.beats_ar4(h, Method::Crsir);
            let (dw, dn) = self.beats_ar4(h, Method::Dfm5);
            let _ = writeln!(
                out,
                "\nSeries with smaller RMSE than AR(4): crsir {cw} of {cn}, dfm5 {dw} of {dn}.\n"
            );
        }
        if !self.failures.is_empty() {
            let _ = writeln!(out, "## Failures\n");
            for f in &self.failures {
                let _ = writeln!(out, "- {} (h = {}): {}", f.series, f.horizon, f.message);
            }
        }
        out
    }
}

fn modal_choice(choices: &[CvChoice]) -> (Option<usize>, Option<f64>) {
    let mut counts: BTreeMap<(usize, u64), usize> = BTreeMap::new();
    for ch in choices {
        *counts.entry((ch.c, ch.tau.to_bits())).or_insert(0) += 1;
    }
    let best = counts.iter().max_by(|a, b| {
        a.1.cmp(b.1)
            .then(b.0 .0.cmp(&a.0 .0))
            .then(f64::from_bits(a.0 .1).partial_cmp(&f64::from_bits(b.0 .1)).unwrap())
    });
    match best {
        Some(((c, tau), _)) => (Some(*c), Some(f64::from_bits(*tau))),
        None => (None, None),
    }
}

/// The full rolling study: for every target and horizon, slide the window
/// across the sample, cross-validate on schedule, forecast with all three
/// methods at each origin, and aggregate RMSEs. Failures are recorded per
/// (series, horizon) without aborting the rest.
pub fn rolling_oos(panel: &LoadedPanel, config: &PanelConfig) -> Result<EvalReport> {
    config.validate()?;
    if config.forecast_targets.is_empty() {
        return Err(Error::Config("forecast_targets is empty".into()));
    }
    let x = panel.data.values();
    let t = x.nrows();
    let w = config.window_length;
    let slices = config.effective_slices();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut n_origins = BTreeMap::new();

    for name in &config.forecast_targets {
        let target_idx = panel.column_index(name)?;
        let y: Vec<f64> = x.column(target_idx).to_vec();
        for &h in &config.horizons {
            if t < w + h {
                failures.push(EvalFailure {
                    series: name.clone(),
                    horizon: h,
                    message: format!("sample of {t} rows cannot cover window {w} plus lead {h}"),
                });
                continue;
            }
            let origins: Vec<usize> = ((w - 1)..(t - h)).step_by(config.eval_stride).collect();
            n_origins.insert(h, origins.len());

            let cv_slots: Vec<usize> = (0..origins.len()).step_by(config.cv_refresh).collect();
            let cv_results: Vec<Result<CvChoice>> = cv_slots
                .par_iter()
                .map(|&slot| {
                    let origin = origins[slot];
                    let lo = origin + 1 - w;
                    cross_validate(
                        x.slice(s![lo..=origin, ..]),
                        &y[lo..=origin],
                        h,
                        &config.cv_grid,
                        slices,
                        config.alpha,
                    )
                })
                .collect();

            let mut choices: Vec<CvChoice> = Vec::with_capacity(origins.len());
            let mut cv_error = None;
            for (rank, _) in origins.iter().enumerate() {
                let slot = rank / config.cv_refresh;
                match &cv_results[slot.min(cv_results.len() - 1)] {
                    Ok(ch) => choices.push(*ch),
                    Err(e) => {
                        cv_error = Some(e.to_string());
                        break;
                    }
                }
            }
            if let Some(message) = cv_error {
                failures.push(EvalFailure {
                    series: name.clone(),
                    horizon: h,
                    message: format!("cross-validation failed: {message}"),
                });
                continue;
            }

            let forecasts: Vec<Result<OriginForecast>> = origins
                .par_iter()
                .zip(&choices)
                .map(|(&origin, &choice)| {
                    forecast_at_origin(x.view(), &y, origin, h, w, choice, slices, config.alpha)
                })
                .collect();
            if let Some(err) = forecasts.iter().find_map(|f| f.as_ref().err()) {
                failures.push(EvalFailure {
                    series: name.clone(),
                    horizon: h,
                    message: format!("forecast failed: {err}"),
                });
                continue;
            }
            let forecasts: Vec<OriginForecast> =
                forecasts.into_iter().map(|f| f.unwrap()).collect();
            let actual: Vec<f64> = origins.iter().map(|&o| y[o + h]).collect();

            let crsir: Vec<f64> = forecasts.iter().map(|f| f.crsir).collect();
            let ar4: Vec<f64> = forecasts.iter().map(|f| f.ar4).collect();
            let dfm5: Vec<f64> = forecasts.iter().map(|f| f.dfm5).collect();
            let rmse_crsir = rmse(&crsir, &actual)?;
            let rmse_ar4 = rmse(&ar4, &actual)?;
            let rmse_dfm5 = rmse(&dfm5, &actual)?;
            let (modal_c, modal_tau) = modal_choice(&choices);

            records.push(SeriesRecord {
                series: name.clone(),
                horizon: h,
                method: Method::Crsir,
                rmse: rmse_crsir,
                relative_rmse: rmse_crsir / rmse_ar4,
                c: modal_c,
                tau: modal_tau,
            });
            records.push(SeriesRecord {
                series: name.clone(),
                horizon: h,
                method: Method::Ar4,
                rmse: rmse_ar4,
                relative_rmse: 1.0,
                c: None,
                tau: None,
            });
            records.push(SeriesRecord {
                series: name.clone(),
                horizon: h,
                method: Method::Dfm5,
                rmse: rmse_dfm5,
                relative_rmse: rmse_dfm5 / rmse_ar4,
                c: None,
                tau: None,
            });
        }
    }

    Ok(EvalReport {
        records,
        failures,
        horizons: config.horizons.clone(),
        window: w,
        n_origins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::simulate::synthetic_panel_sized;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn rmse_hand_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[3.0, 3.0], &[1.0, 1.0]).unwrap(), 2.0);
        assert_relative_eq!(
            rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap(),
            12.5_f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(matches!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch(1, 2))
        ));
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn gap_excludes_surroundings_exactly() {
        let h = 2;
        let n = 30;
        let i = 12;
        let train = gapped_train_indices(i, n, h);
        for &j in &train {
            assert!(j.abs_diff(i) >= 2 * h + 3);
        }
        for j in 0..n {
            let near = j.abs_diff(i) <= 2 * h + 2;
            assert_eq!(near, !train.contains(&j), "index {j}");
        }
        assert!(gapped_train_indices(0, 5, 1).is_empty());
    }

    #[test]
    fn residualize_alignment_and_exact_fit() {
        // y follows an exact AR(1); its lead residuals must vanish
        let mut y = vec![1.0, 0.9];
        for t in 2..60 {
            y.push(0.5 * y[t - 1] + 0.25 * y[t - 2]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let x = Array2::from_shape_fn((60, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let res = residualize(x.view(), &y, 1).unwrap();
        assert_eq!(res.y.len(), 60 - 1 - 3);
        for v in &res.y {
            assert!(v.abs() <= 1e-8, "residual {v}");
        }
        assert_eq!(res.x.nrows(), res.y.len());
        assert_eq!(res.x_end.len(), 3);
    }

    #[test]
    fn residualize_removes_lag_dependence_from_predictors() {
        // a predictor equal to y's own lag becomes numerically zero
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let mut y = vec![0.0; 4];
        for t in 4..80 {
            let v = 0.7 * y[t - 1] + rng.sample::<f64, _>(StandardNormal);
            y.push(v);
        }
        let mut x = Array2::zeros((80, 2));
        for t in 0..80 {
            x[[t, 0]] = if t > 0 { y[t - 1] } else { 0.0 };
            x[[t, 1]] = rng.sample(StandardNormal);
        }
        let res = residualize(x.view(), &y, 1).unwrap();
        let col0_max = res.x.column(0).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let col1_max = res.x.column(1).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(col0_max <= 1e-8, "lag column survived: {col0_max}");
        assert!(col1_max > 0.1);
    }

    #[test]
    fn select_best_tie_rules() {
        let choice = select_best(&[
            (Some(1.0), 2, 0.1),
            (Some(1.0), 1, 0.1),
            (Some(1.0), 1, 0.5),
            (Some(2.0), 1, 0.9),
        ])
        .unwrap();
        assert_eq!(choice.c, 1);
        assert_eq!(choice.tau, 0.5);
        assert!(select_best(&[(None, 1, 0.1)]).is_none());
        let lone = select_best(&[(None, 1, 0.1), (Some(3.0), 5, 0.7)]).unwrap();
        assert_eq!((lone.c, lone.tau), (5, 0.7));
    }

    #[test]
    fn single_point_grid_short_circuits() {
        let grid = CvGrid {
            c: vec![3],
            tau: vec![0.5],
        };
        // data that could never be fit: short-circuit must not touch it
        let x = Array2::<f64>::zeros((5, 2));
        let y = vec![0.0; 5];
        let choice = cross_validate(x.view(), &y, 1, &grid, 5, 0.05).unwrap();
        assert_eq!((choice.c, choice.tau), (3, 0.5));
    }

    fn planted_two_block_window(seed: u64, w: usize) -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let mut x = Array2::zeros((w, n));
        for i in 0..w {
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            for j in 0..4 {
                x[[i, j]] = g1 + 0.3 * rng.sample::<f64, _>(StandardNormal);
                x[[i, 4 + j]] = g2 + 0.3 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut y = vec![0.0; w];
        for i in 0..(w - 1) {
            let b1: f64 = (0..4).map(|j| x[[i, j]]).sum::<f64>() / 4.0;
            let b2: f64 = (0..4).map(|j| x[[i, 4 + j]]).sum::<f64>() / 4.0;
            y[i + 1] = b1 - b2 + 0.2 * rng.sample::<f64, _>(StandardNormal);
        }
        (x, y)
    }

    #[test]
    fn cv_prefers_coarse_clusterings_on_block_design() {
        let grid = CvGrid {
            c: vec![1, 2, 8],
            tau: vec![0.1, 0.5],
        };
        let mut coarse = 0;
        let reps = 12;
        for seed in 0..reps {
            let (x, y) = planted_two_block_window(900 + seed, 70);
            let choice = cross_validate(x.view(), &y, 1, &grid, 5, 0.05).unwrap();
            if choice.c <= 2 {
                coarse += 1;
            }
        }
        assert!(
            coarse * 10 >= reps * 8,
            "coarse clusterings chosen {coarse} of {reps}"
        );
    }

    #[test]
    fn forecasts_ignore_rows_after_origin() {
        let panel = synthetic_panel_sized(31, 150).unwrap();
        let y: Vec<f64> = panel.values().column(0).to_vec();
        let choice = CvChoice { c: 3, tau: 0.5 };
        let origin = 120;
        let clean =
            forecast_at_origin(panel.values().view(), &y, origin, 2, 60, choice, 5, 0.05)
                .unwrap();
        let mut poisoned = panel.values().to_owned();
        for i in (origin + 1)..poisoned.nrows() {
            poisoned.row_mut(i).fill(1e12);
        }
        let mut y_poisoned = y.clone();
        for v in y_poisoned.iter_mut().skip(origin + 1) {
            *v = 1e12;
        }
        let dirty =
            forecast_at_origin(poisoned.view(), &y_poisoned, origin, 2, 60, choice, 5, 0.05)
                .unwrap();
        assert_eq!(clean, dirty);
    }

    fn small_eval_config() -> PanelConfig {
        PanelConfig {
            forecast_targets: vec!["tgt_a".into()],
            horizons: vec![1],
            window_length: 60,
            slices: Some(5),
            eval_stride: 10,
            cv_refresh: 4,
            cv_grid: CvGrid {
                c: vec![1, 3],
                tau: vec![0.1, 0.9],
            },
            ..PanelConfig::default()
        }
    }

    #[test]
    fn rolling_report_is_reproducible_and_well_formed() {
        let data = synthetic_panel_sized(33, 160).unwrap();
        let panel = LoadedPanel {
            data,
            dropped_rows: 0,
        };
        let config = small_eval_config();
        let report = rolling_oos(&panel, &config).unwrap();
        assert!(report.failures.is_empty(), "failures: {:?}", report.failures);
        assert_eq!(report.records.len(), 3);
        let ar4 = report
            .records
            .iter()
            .find(|r| r.method == Method::Ar4)
            .unwrap();
        assert_eq!(ar4.relative_rmse, 1.0);
        let crsir = report
            .records
            .iter()
            .find(|r| r.method == Method::Crsir)
            .unwrap();
        assert!(crsir.c.is_some() && crsir.tau.is_some());

        let again = rolling_oos(&panel, &config).unwrap();
        assert_eq!(report.to_csv(), again.to_csv());
        assert_eq!(report.to_markdown(), again.to_markdown());

        let md = report.to_markdown();
        for label in ["0.050", "0.250", "0.500", "0.750", "0.950"] {
            assert!(md.contains(label), "missing quantile row {label}");
        }
        assert!(md.contains("smaller RMSE than AR(4)"));
        let csv = report.to_csv();
        assert!(csv.starts_with("series,horizon,method,rmse,relative_rmse,c,tau\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn missing_target_is_a_config_error() {
        let data = synthetic_panel_sized(34, 120).unwrap();
        let panel = LoadedPanel {
            data,
            dropped_rows: 0,
        };
        let mut config = small_eval_config();
        config.forecast_targets = vec!["nope".into()];
        assert!(matches!(
            rolling_oos(&panel, &config),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn short_sample_recorded_as_failure_not_abort() {
        let data = synthetic_panel_sized(35, 70).unwrap();
        let panel = LoadedPanel {
            data,
            dropped_rows: 0,
        };
        let mut config = small_eval_config();
        config.window_length = 69;
        config.horizons = vec![1, 2];
        let report = rolling_oos(&panel, &config).unwrap();
        assert!(report.records.iter().all(|r| r.horizon == 1));
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].horizon, 2);
    }

    #[test]
    fn modal_choice_counts_and_breaks_ties() {
        let choices = vec![
            CvChoice { c: 1, tau: 0.5 },
            CvChoice { c: 2, tau: 0.1 },
            CvChoice { c: 2, tau: 0.1 },
        ];
        assert_eq!(modal_choice(&choices), (Some(2), Some(0.1)));
        let tied = vec![CvChoice { c: 2, tau: 0.1 }, CvChoice { c: 1, tau: 0.5 }];
        assert_eq!(modal_choice(&tied), (Some(1), Some(0.5)));
    }
}
