//! Experiment orchestration: configuration, panel ingestion, simulation
//! designs, and rolling out-of-sample evaluation.

pub mod config;
pub mod evaluate;
pub mod panel;
pub mod simulate;

pub use config::{CvGrid, PanelConfig};
pub use evaluate::{
    cross_validate, forecast_at_origin, rmse, rolling_oos, CvChoice, EvalFailure, EvalReport,
    Method, OriginForecast, SeriesRecord,
};
pub use panel::{apply_transform, load_panel, load_panel_from, LoadedPanel, TransformCode};
pub use simulate::{
    simulate_design, simulate_run, simulation_study, synthetic_panel, synthetic_panel_sized,
    SimulationSummary, SIM_CORRELATION, SIM_NOISE_VARIANCE, SIM_PREDICTORS, SYNTHETIC_TARGETS,
};
