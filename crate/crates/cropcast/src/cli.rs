//! Command-line entry points. Every subcommand reads `--config`, draws all
//! randomness from `--seed` and writes its artifacts under `--out`.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use cropcast_core::assimilation::Method;
use cropcast_core::crop_model::{calibrate, simulate, CropParams, CropState, ParamSpace, WeatherDay};
use cropcast_core::forecaster::FeatureRow;
use cropcast_core::remote_sensing::{compute_vi, fit_lai_inverter, invert_lai, ViVector};

use crate::config::ExperimentConfig;
use crate::error::{Context, Error, Result};
use crate::io::{self, ObsRecord, TrajectoryRow, ViRow};
use crate::pipeline::run_pipeline;
use crate::stages::{self, SensedDate};
use crate::twin::generate_twin;

#[derive(Debug, Parser)]
#[command(name = "cropcast", version, about = "Crop growth assimilation and yield forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Experiment configuration (key = value); built-in defaults if omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the growth model over the configured weather.
    Simulate(Common),
    /// Fit crop parameters to LAI observations.
    Calibrate(Common),
    /// Assimilate LAI observations with one method.
    Assimilate {
        #[arg(long)]
        method: Method,
        #[command(flatten)]
        common: Common,
    },
    /// Vegetation indices from band reflectance.
    Vi(Common),
    /// Estimate LAI from vegetation indices.
    Invert(Common),
    /// Canopy volume and height from surface and terrain rasters.
    Canopy(Common),
    /// Join indices, canopy structure, LAI and analysis pools per date.
    Features(Common),
    /// Train the yield regressor on a 3:1:1 plot split.
    Train(Common),
    /// Predict yields with a trained model.
    Predict(Common),
    /// Agreement between measured and predicted yields.
    Evaluate(Common),
    /// Generate a synthetic twin experiment.
    Twin(Common),
    /// Twin, assimilation, features, training and evaluation for every method.
    Pipeline(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Assimilate { common, .. } => common,
            Command::Simulate(c)
            | Command::Calibrate(c)
            | Command::Vi(c)
            | Command::Invert(c)
            | Command::Canopy(c)
            | Command::Features(c)
            | Command::Train(c)
            | Command::Predict(c)
            | Command::Evaluate(c)
            | Command::Twin(c)
            | Command::Pipeline(c) => c,
        }
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cmd: &Command) -> Result<()> {
    let c = cmd.common();
    let cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let out = c.out.as_path();
    std::fs::create_dir_all(out).in_file(out)?;
    match cmd {
        Command::Simulate(_) => cmd_simulate(&cfg, out),
        Command::Calibrate(_) => cmd_calibrate(&cfg, c.seed, out),
        Command::Assimilate { method, .. } => cmd_assimilate(&cfg, *method, c.seed, out),
        Command::Vi(_) => cmd_vi(&cfg, out),
        Command::Invert(_) => cmd_invert(&cfg, c.seed, out),
        Command::Canopy(_) => cmd_canopy(&cfg, out),
        Command::Features(_) => cmd_features(&cfg, out),
        Command::Train(_) => cmd_train(&cfg, c.seed, out),
        Command::Predict(_) => cmd_predict(&cfg, out),
        Command::Evaluate(_) => cmd_evaluate(&cfg, out),
        Command::Twin(_) => cmd_twin(&cfg, c.seed, out),
        Command::Pipeline(_) => {
            let report = run_pipeline(&cfg, c.seed, out)?;
            print!("{}", report.csv_text());
            Ok(())
        }
    }
}

fn params(cfg: &ExperimentConfig) -> Result<CropParams> {
    match &cfg.paths.params {
        Some(p) => io::read_params(p),
        None => Ok(CropParams::default()),
    }
}

fn weather(cfg: &ExperimentConfig) -> Result<Vec<WeatherDay>> {
    io::read_weather(cfg.paths.require("weather")?)
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let w = weather(cfg)?;
    let p = params(cfg)?;
    let traj = simulate(&p, &w, &cfg.initial.state(p.sla)).context("simulate")?;
    let rows: Vec<TrajectoryRow> = traj
        .iter()
        .enumerate()
        .map(|(t, s)| TrajectoryRow {
            plot_id: None,
            date: io::date_at(w[0].date, t),
            state: *s,
        })
        .collect();
    io::write_trajectories(&out.join("trajectory.csv"), &rows)
}

fn cmd_calibrate(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<()> {
    let w = weather(cfg)?;
    let base = params(cfg)?;
    let obs = io::read_observations(cfg.paths.require("observations")?)?;
    let groups = io::group_by_plot(&obs, |o| o.plot_id.as_deref());
    if groups.len() != 1 {
        return Err(Error::input("calibrate expects observations of exactly one plot"));
    }
    let series = io::observation_series(&groups[0].1, w[0].date, w.len()).context("observations")?;
    let k = &cfg.calibrate;
    let space = ParamSpace::relative_box(&base, &k.params, k.fraction).context("calibrate")?;
    let fit = calibrate(&space, &base, &w, &cfg.initial.state(base.sla), &series, k.budget, seed)
        .context("calibrate")?;
    io::write_text(&out.join("calibrated_params.txt"), &io::params_text(&fit.params))?;
    println!("cost,{}", fit.cost);
    Ok(())
}

fn cmd_assimilate(cfg: &ExperimentConfig, method: Method, seed: u64, out: &Path) -> Result<()> {
    let w = weather(cfg)?;
    let p = params(cfg)?;
    let obs = io::read_observations(cfg.paths.require("observations")?)?;
    let start = w[0].date;
    let init = cfg.initial.state(p.sla);
    let mut traj = Vec::new();
    let mut runs = Vec::new();
    for (i, (plot, recs)) in io::group_by_plot(&obs, |o| o.plot_id.as_deref()).into_iter().enumerate() {
        let label = plot.clone().unwrap_or_else(|| "observations".into());
        let series = io::observation_series(&recs, start, w.len()).context(&label)?;
        let run = stages::assimilate_plot(method, &p, &w, &init, &series, &cfg.assim, seed, i as u64)
            .context(format!("assimilate {label}"))?;
        traj.extend(run.means.iter().enumerate().map(|(t, m)| TrajectoryRow {
            plot_id: plot.clone(),
            date: io::date_at(start, t),
            state: CropState::from_slice(m.as_slice()),
        }));
        runs.push((plot, run));
    }
    let diag: Vec<(Option<&str>, &_)> = runs
        .iter()
        .flat_map(|(p, r)| r.diagnostics.windows.iter().map(move |w| (p.as_deref(), w)))
        .collect();
    io::write_trajectories(&out.join(format!("analysis_{method}.csv")), &traj)?;
    io::write_diagnostics(&out.join(format!("diagnostics_{method}.csv")), &diag)
}

fn cmd_vi(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let bands = io::read_bands(cfg.paths.require("bands")?)?;
    let rows: Vec<ViRow> = bands
        .iter()
        .map(|b| ViRow {
            plot_id: b.plot_id.clone(),
            date: b.date,
            vi: compute_vi(&b.sample),
        })
        .collect();
    io::write_vi(&out.join("vi.csv"), &rows)
}

type Key = (String, NaiveDate);

fn index<T>(rows: impl IntoIterator<Item = (Key, T)>, what: &str) -> Result<HashMap<Key, T>> {
    let mut map = HashMap::new();
    for (k, v) in rows {
        let msg = format!("{what}: duplicate row for plot {} on {}", k.0, k.1);
        if map.insert(k, v).is_some() {
            return Err(Error::input(msg));
        }
    }
    Ok(map)
}

fn cmd_invert(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<()> {
    let vi = io::read_vi(cfg.paths.require("vi")?)?;
    let reference = io::read_keyed(cfg.paths.require("lai_reference")?, &["lai"])?;
    let by_key = index(vi.iter().map(|r| ((r.plot_id.clone(), r.date), &r.vi)), "vi")?;
    let train: Vec<(ViVector, f64)> = reference
        .iter()
        .map(|(id, d, v)| {
            by_key
                .get(&(id.clone(), *d))
                .map(|x| (*(*x), v[0]))
                .ok_or_else(|| Error::input(format!("no indices for plot {id} on {d}")))
        })
        .collect::<Result<_>>()?;
    let model = fit_lai_inverter(&train, cfg.invert.rounds, cfg.invert.learning_rate, seed)
        .context("invert")?;
    let rows = vi
        .iter()
        .map(|r| {
            let lai = invert_lai(&model, &r.vi).context(format!("plot {} on {}", r.plot_id, r.date))?;
            Ok((r.plot_id.clone(), r.date, vec![lai]))
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_keyed(&out.join("lai.csv"), &["lai"], &rows)
}

fn cmd_canopy(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let manifest = io::read_raster_manifest(cfg.paths.require("rasters")?)?;
    let rows = manifest
        .iter()
        .map(|(id, d, dsm, dem)| {
            let (cv, ch) = stages::canopy_structure(dsm, dem).context(format!("plot {id} on {d}"))?;
            Ok((id.clone(), *d, vec![cv, ch]))
        })
        .collect::<Result<Vec<_>>>()?;
    io::write_keyed(&out.join("canopy.csv"), &["cv", "ch"], &rows)
}

/// Dates come from the index table; every other input must match each
/// (plot, date) exactly.
fn cmd_features(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let vi = io::read_vi(cfg.paths.require("vi")?)?;
    let canopy = io::read_keyed(cfg.paths.require("canopy")?, &["cv", "ch"])?;
    let obs = io::read_observations(cfg.paths.require("observations")?)?;
    let traj = io::read_trajectories(cfg.paths.require("trajectories")?)?;
    let canopy = index(canopy.into_iter().map(|(id, d, v)| ((id, d), v)), "canopy")?;
    let plot_of = |p: &Option<String>| {
        p.clone()
            .ok_or_else(|| Error::input("observations and trajectories need a plot_id column"))
    };
    let lai = index(
        obs.iter()
            .map(|o: &ObsRecord| Ok(((plot_of(&o.plot_id)?, o.date), o.lai)))
            .collect::<Result<Vec<_>>>()?,
        "observations",
    )?;
    let states = index(
        traj.iter()
            .map(|t| Ok(((plot_of(&t.plot_id)?, t.date), t.state)))
            .collect::<Result<Vec<_>>>()?,
        "trajectories",
    )?;
    let mut first: HashMap<String, NaiveDate> = HashMap::new();
    for t in &traj {
        let e = first.entry(plot_of(&t.plot_id)?).or_insert(t.date);
        *e = (*e).min(t.date);
    }
    let mut rows: Vec<FeatureRow> = Vec::new();
    for r in &vi {
        let key = (r.plot_id.clone(), r.date);
        let missing = |what: &str| Error::input(format!("no {what} for plot {} on {}", r.plot_id, r.date));
        let c = canopy.get(&key).ok_or_else(|| missing("canopy row"))?;
        let start = first.get(&r.plot_id).ok_or_else(|| missing("trajectory"))?;
        let day = (r.date - *start).num_days() as usize;
        let sensed = SensedDate {
            date: r.date,
            day: 0,
            vi: r.vi,
            cv: c[0],
            ch: c[1],
            lai: *lai.get(&key).ok_or_else(|| missing("LAI observation"))?,
        };
        let state = *states.get(&key).ok_or_else(|| missing("trajectory state"))?;
        let mut row = stages::feature_rows(&r.plot_id, &[sensed], &[state])?.remove(0);
        row.dvd = day as u32;
        rows.push(row);
    }
    io::write_features(&out.join("features.csv"), &rows)
}

fn cmd_train(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<()> {
    let features = io::read_features(cfg.paths.require("features")?)?;
    let yields = io::read_yields(cfg.paths.require("yields")?)?;
    let sel = stages::resolve_selection(cfg.forecast.select, &features)?;
    let ids: Vec<String> = io::group_by_plot(&features, |r| Some(r.plot_id.as_str()))
        .into_iter()
        .filter_map(|g| g.0)
        .collect();
    let split = stages::split_plots(ids, seed).context("split")?;
    let (train, val, test) = stages::partition(&features, &yields, sel, &split).context("features")?;
    let model = stages::train_yield_model(&train, &val, &cfg.forecast, seed).context("train")?;
    io::write_text(&out.join("model.txt"), &io::model_text(&model, sel))?;
    let paired = stages::predict(&model, &test)?;
    io::write_paired(&out.join("paired_test.csv"), &paired)
}

fn cmd_predict(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let (model, sel) = io::read_model(cfg.paths.require("model")?)?;
    let features = io::read_features(cfg.paths.require("features")?)?;
    let designs = cropcast_core::forecaster::assemble_features(&features, sel).context("features")?;
    match &cfg.paths.yields {
        Some(p) => {
            let yields = io::read_yields(p)?;
            let joined = cropcast_core::forecaster::join_yields(&designs, &yields)?;
            let d: Vec<_> = designs
                .into_iter()
                .zip(joined)
                .map(|((id, x), (_, y))| (id, x, y))
                .collect();
            io::write_paired(&out.join("predictions.csv"), &stages::predict(&model, &d)?)
        }
        None => {
            let rows = designs
                .iter()
                .map(|(id, x)| {
                    let y = cropcast_core::forecaster::predict_yield(&model, x).context(format!("plot {id}"))?;
                    Ok(format!("{id},{}\n", io::fmt_f(y)))
                })
                .collect::<Result<String>>()?;
            io::write_text(&out.join("predictions.csv"), &format!("plot_id,predicted\n{rows}"))
        }
    }
}

/// Prints `rmse,<value>` and `r2,<value>`; an undefined R² is reported on
/// its line without failing the command.
fn cmd_evaluate(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let paired = io::read_paired(cfg.paths.require("paired")?)?;
    let (e, r2) = stages::evaluate(&paired)?;
    let r2_line = match r2 {
        Ok(v) => format!("r2,{}", io::fmt_f(v)),
        Err(err) => format!("r2,error: {err}"),
    };
    let text = format!("rmse,{}\n{r2_line}\n", io::fmt_f(e));
    print!("{text}");
    io::write_text(&out.join("metrics.csv"), &format!("metric,value\n{text}"))
}

fn cmd_twin(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<()> {
    let twin = generate_twin(&cfg.twin, &params(cfg)?, &cfg.initial, seed).context("twin")?;
    twin.write(out, true)
}
