//! Command-line front end: simulation benchmark, model fitting and
//! forecasting, rolling evaluation, and cluster reports.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ndarray::s;

use crsir::harness::{load_panel, rolling_oos, simulation_study, LoadedPanel, PanelConfig};
use crsir::{
    complete_linkage_cluster, complete_linkage_dendrogram, correlation, crsir_fit,
    dissimilarity_matrix, CrsirModel, DataMatrix, Error, Result,
};

#[derive(Parser)]
#[command(
    name = "crsir",
    version,
    about = "Cluster-based regularized sliced inverse regression forecasting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the equicorrelated benchmark simulation and print a summary.
    Simulate {
        /// Observations per run.
        #[arg(long, default_value_t = 300)]
        t: usize,
        /// Number of simulated runs.
        #[arg(long, default_value_t = 100)]
        runs: usize,
        /// Cluster count for the clustered pipeline.
        #[arg(long, default_value_t = 10)]
        c: usize,
        /// Shrinkage weight for the clustered pipeline.
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// Rolling fit window.
        #[arg(long, default_value_t = 30)]
        window: usize,
        /// Slice count at both stages.
        #[arg(long, default_value_t = 5)]
        slices: usize,
        /// Dimension-test significance level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Fit a model to a panel and write a versioned model artifact.
    Fit {
        /// TOML config (transforms, window, slices); flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV panel; overrides the config's data_path.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Target series name.
        #[arg(long)]
        target: String,
        /// Cluster count.
        #[arg(long)]
        c: usize,
        /// Shrinkage weight in [0, 1].
        #[arg(long)]
        tau: f64,
        /// Rows ahead the target is shifted when forming training pairs.
        #[arg(long, default_value_t = 1)]
        horizon: usize,
        /// Slice count; derived from the sample size when omitted.
        #[arg(long)]
        slices: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Output path for the model artifact.
        #[arg(long)]
        out: PathBuf,
    },
    /// Load a model artifact and print one prediction per panel row.
    Forecast {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Write predictions here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the rolling out-of-sample study and write report files.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory receiving eval_report.csv and eval_summary.md.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Print the complete-linkage merge schedule for a panel.
    ClusterReport {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Also print the assignment at this cluster count.
        #[arg(long)]
        clusters: Option<usize>,
    },
}

/// Writes to stdout, treating a closed pipe as a clean shutdown.
fn write_stdout(body: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(body.as_bytes()).and_then(|()| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(e.into()),
    }
}

fn effective_config(config: Option<&Path>, data: Option<&Path>) -> Result<PanelConfig> {
    let mut cfg = match config {
        Some(path) => PanelConfig::load(path)?,
        None => PanelConfig::default(),
    };
    if let Some(path) = data {
        cfg.data_path = Some(path.to_path_buf());
    }
    Ok(cfg)
}

fn load_described_panel(cfg: &PanelConfig) -> Result<LoadedPanel> {
    let panel = load_panel(cfg)?;
    eprintln!(
        "panel: {} rows x {} series ({} rows dropped for missing values)",
        panel.data.n_rows(),
        panel.data.n_cols(),
        panel.dropped_rows
    );
    Ok(panel)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            t,
            runs,
            c,
            tau,
            window,
            slices,
            alpha,
            seed,
        } => {
            let summary = simulation_study(t, runs, seed, c, tau, window, slices, alpha)?;
            write_stdout(&summary.to_markdown())
        }
        Command::Fit {
            config,
            data,
            target,
            c,
            tau,
            horizon,
            slices,
            alpha,
            out,
        } => {
            if horizon == 0 {
                return Err(Error::Config("horizon must be positive".into()));
            }
            let cfg = effective_config(config.as_deref(), data.as_deref())?;
            let panel = load_described_panel(&cfg)?;
            let target_idx = panel.column_index(&target)?;
            let v = panel.data.values();
            let t_rows = v.nrows();
            if t_rows <= horizon + 1 {
                return Err(Error::TooFewObservations {
                    need: horizon + 2,
                    got: t_rows,
                });
            }
            let x = DataMatrix::new(
                v.slice(s![..t_rows - horizon, ..]).to_owned(),
                panel.data.column_names().to_vec(),
            )?;
            let y: Vec<f64> = v.column(target_idx).iter().skip(horizon).copied().collect();
            let slices = slices.unwrap_or_else(|| (x.n_rows() / 4).clamp(2, 10));
            let model = crsir_fit(&x, &y, c, tau, slices, alpha)?;
            model.save(&out)?;
            write_stdout(&format!(
                "fitted {}: {} series, {} blocks, {} variates, {} features\n",
                out.display(),
                model.column_names.len(),
                model.block_dims.len(),
                model.n_variates(),
                model.n_features()
            ))
        }
        Command::Forecast {
            model,
            config,
            data,
            out,
        } => {
            let cfg = effective_config(config.as_deref(), data.as_deref())?;
            let panel = load_described_panel(&cfg)?;
            let model = CrsirModel::load(&model)?;
            if model.column_names != panel.data.column_names() {
                return Err(Error::Config(
                    "panel series do not match the model's training series".into(),
                ));
            }
            let preds = model.predict(panel.data.values().view())?;
            let mut body = String::from("row,prediction\n");
            for (i, p) in preds.iter().enumerate() {
                body.push_str(&format!("{i},{p}\n"));
            }
            match out {
                Some(path) => {
                    fs::write(path, body)?;
                    Ok(())
                }
                None => write_stdout(&body),
            }
        }
        Command::Evaluate {
            config,
            data,
            out_dir,
        } => {
            let cfg = effective_config(Some(&config), data.as_deref())?;
            let panel = load_described_panel(&cfg)?;
            let report = rolling_oos(&panel, &cfg)?;
            fs::create_dir_all(&out_dir)?;
            let csv_path = out_dir.join("eval_report.csv");
            let md_path = out_dir.join("eval_summary.md");
            fs::write(&csv_path, report.to_csv())?;
            fs::write(&md_path, report.to_markdown())?;
            write_stdout(&report.to_markdown())?;
            eprintln!("wrote {} and {}", csv_path.display(), md_path.display());
            Ok(())
        }
        Command::ClusterReport {
            config,
            data,
            clusters,
        } => {
            let cfg = effective_config(config.as_deref(), data.as_deref())?;
            let panel = load_described_panel(&cfg)?;
            let corr = correlation(&panel.data)?;
            let dissim = dissimilarity_matrix(&corr)?;
            let merges = complete_linkage_dendrogram(&dissim)?;
            let mut body = String::from("step,left,right,height\n");
            for m in &merges {
                body.push_str(&format!("{},{},{},{}\n", m.step, m.left, m.right, m.height));
            }
            if let Some(c) = clusters {
                let assignment = complete_linkage_cluster(&dissim, c)?;
                body.push_str("\nseries,cluster\n");
                for (name, label) in panel
                    .data
                    .column_names()
                    .iter()
                    .zip(&assignment.labels)
                {
                    body.push_str(&format!("{name},{label}\n"));
                }
            }
            write_stdout(&body)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
