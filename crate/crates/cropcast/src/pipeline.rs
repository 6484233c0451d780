//! End-to-end twin pipeline and the method comparison report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use cropcast_core::assimilation::{AssimRun, Method};
use cropcast_core::crop_model::CropState;
use cropcast_core::forecaster::FeatureRow;
use cropcast_core::remote_sensing::compute_vi;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{Context, Result};
use crate::io::{self, fmt_f, fmt_opt, ViRow};
use crate::stages::{self, SensedDate};
use crate::twin::{generate_twin, Twin};

pub const REPORT_HEADER: &str = "method,seed,lai_rmse_open,lai_rmse_analysis,yield_r2,yield_rmse,wall_ms";

/// Field-trial figures quoted for orientation; a synthetic twin cannot
/// reproduce them.
const REFERENCE_NOTE: &[&str] = &[
    "# reference values from a published field trial, not reproducible with this synthetic twin:",
    "#   yield R2 0.831, yield RMSE 372.8 kg/ha, R2 gain from assimilation 0.164, RMSE change -147.4 kg/ha",
    "# NA marks a column that does not apply (no assimilation, no test dates, undefined R2, clock off)",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub seed: u64,
    pub lai_rmse_open: f64,
    pub lai_rmse_analysis: Option<f64>,
    pub yield_r2: Option<f64>,
    pub yield_rmse: Option<f64>,
    pub wall_ms: Option<u128>,
    pub diagnostics: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
}

impl ComparisonReport {
    pub fn csv_text(&self) -> String {
        let mut s = String::new();
        for line in REFERENCE_NOTE {
            s.push_str(line);
            s.push('\n');
        }
        s.push_str(REPORT_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.method,
                r.seed,
                fmt_f(r.lai_rmse_open),
                fmt_opt(r.lai_rmse_analysis),
                fmt_opt(r.yield_r2),
                fmt_opt(r.yield_rmse),
                r.wall_ms.map_or_else(|| io::NA.to_string(), |v| v.to_string()),
            ));
        }
        s
    }

    /// Rows of one method in seed order.
    pub fn method(&self, m: Method) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(move |r| r.method == m)
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Runs seeds `seed .. seed + twin.seeds` (concurrently where possible) and
/// writes `report.csv` under `out`, rows in ascending seed order.
pub fn run_pipeline(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<ComparisonReport> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.twin.seeds as u64).map(|i| seed + i).collect();
    let per_seed = seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s, &seed_dir(out, s)))
        .collect::<Result<Vec<_>>>()?;
    let report = ComparisonReport {
        rows: per_seed.into_iter().flatten().collect(),
    };
    io::write_text(&out.join("report.csv"), &report.csv_text())?;
    Ok(report)
}

fn sensed_dates(twin: &Twin) -> Result<Vec<Vec<SensedDate>>> {
    let dates = twin.obs_dates();
    twin.plots
        .iter()
        .map(|p| {
            p.observations
                .entries()
                .iter()
                .zip(&p.bands)
                .zip(&p.dsm)
                .zip(&dates)
                .map(|(((o, b), dsm), date)| {
                    let (cv, ch) = stages::canopy_structure(dsm, &p.dem).context(format!("plot {}", p.id))?;
                    Ok(SensedDate {
                        date: *date,
                        day: o.time,
                        vi: compute_vi(b),
                        cv,
                        ch,
                        lai: o.values[0],
                    })
                })
                .collect()
        })
        .collect()
}

fn means(run: &AssimRun) -> Vec<CropState> {
    run.means.iter().map(|m| CropState::from_slice(m.as_slice())).collect()
}

fn assimilate_all(cfg: &ExperimentConfig, twin: &Twin, method: Method, seed: u64) -> Result<Vec<AssimRun>> {
    twin.plots
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            stages::assimilate_plot(
                method,
                &twin.background,
                &twin.weather,
                &twin.initial,
                &p.observations,
                &cfg.assim,
                seed,
                i as u64,
            )
            .context(format!("assimilate {method} plot {}", p.id))
        })
        .collect()
}

/// One seed: twin, assimilation per method, features, yield model, metrics.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Vec<ReportRow>> {
    let twin = generate_twin(&cfg.twin, &base_params(cfg)?, &cfg.initial, seed).context("twin")?;
    twin.write(dir, cfg.twin.write_rasters).context("twin")?;
    let sensed = sensed_dates(&twin).context("canopy")?;
    let vi_rows: Vec<ViRow> = twin
        .plots
        .iter()
        .zip(&sensed)
        .flat_map(|(p, s)| {
            s.iter().map(|d| ViRow {
                plot_id: p.id.clone(),
                date: d.date,
                vi: d.vi,
            })
        })
        .collect();
    io::write_vi(&dir.join("vi.csv"), &vi_rows)?;

    let truth = |runs: &'_ [AssimRun]| -> f64 {
        stages::lai_rmse(runs.iter().zip(twin.plots.iter().map(|p| p.truth.as_slice())))
    };
    let open = assimilate_all(cfg, &twin, Method::OpenLoop, seed)?;
    let lai_rmse_open = truth(&open);

    let ids: Vec<String> = twin.plots.iter().map(|p| p.id.clone()).collect();
    let split = stages::split_plots(ids, seed).context("split")?;
    write_split(&dir.join("split.csv"), &split)?;
    let yields = twin.yields()?;

    let mut rows = Vec::new();
    for &method in &cfg.assim.methods {
        let clock = Instant::now();
        let runs = if method == Method::OpenLoop {
            open.clone()
        } else {
            assimilate_all(cfg, &twin, method, seed)?
        };
        let lai_rmse_analysis = method.assimilates().then(|| truth(&runs));

        let mut features: Vec<FeatureRow> = Vec::new();
        let mut trajectories = Vec::new();
        for ((p, run), s) in twin.plots.iter().zip(&runs).zip(&sensed) {
            let m = means(run);
            features.extend(stages::feature_rows(&p.id, s, &m).context("features")?);
            trajectories.extend(m.iter().enumerate().map(|(t, x)| io::TrajectoryRow {
                plot_id: Some(p.id.clone()),
                date: io::date_at(twin.start, t),
                state: *x,
            }));
        }
        let name = method.as_str();
        io::write_trajectories(&dir.join(format!("analysis_{name}.csv")), &trajectories)?;
        let diagnostics = dir.join(format!("diagnostics_{name}.csv"));
        let diag_rows: Vec<(Option<&str>, &_)> = twin
            .plots
            .iter()
            .zip(&runs)
            .flat_map(|(p, r)| r.diagnostics.windows.iter().map(move |w| (Some(p.id.as_str()), w)))
            .collect();
        io::write_diagnostics(&diagnostics, &diag_rows)?;
        io::write_features(&dir.join(format!("features_{name}.csv")), &features)?;

        let (yield_r2, yield_rmse) = if features.is_empty() {
            (None, None)
        } else {
            let sel = stages::resolve_selection(cfg.forecast.select, &features).context("features")?;
            let (train, val, test) = stages::partition(&features, &yields, sel, &split).context("features")?;
            let model = stages::train_yield_model(&train, &val, &cfg.forecast, seed)
                .context(format!("train {name}"))?;
            io::write_text(&dir.join(format!("model_{name}.txt")), &io::model_text(&model, sel))?;
            let paired = stages::predict(&model, &test).context(format!("predict {name}"))?;
            io::write_paired(&dir.join(format!("paired_{name}.csv")), &paired)?;
            let (e, r2) = stages::evaluate(&paired).context(format!("evaluate {name}"))?;
            (r2.ok(), Some(e))
        };
        rows.push(ReportRow {
            method,
            seed,
            lai_rmse_open,
            lai_rmse_analysis,
            yield_r2,
            yield_rmse,
            wall_ms: cfg.report.wall_clock.then(|| clock.elapsed().as_millis()),
            diagnostics,
        });
    }
    Ok(rows)
}

fn base_params(cfg: &ExperimentConfig) -> Result<cropcast_core::crop_model::CropParams> {
    match &cfg.paths.params {
        Some(p) => io::read_params(p),
        None => Ok(Default::default()),
    }
}

fn write_split(path: &Path, split: &(Vec<String>, Vec<String>, Vec<String>)) -> Result<()> {
    let mut s = String::from("plot_id,set\n");
    for (name, ids) in [("train", &split.0), ("val", &split.1), ("test", &split.2)] {
        for id in ids {
            s.push_str(&format!("{id},{name}\n"));
        }
    }
    io::write_text(path, &s)
}
