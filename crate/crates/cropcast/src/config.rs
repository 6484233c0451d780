//! Flat `key = value` experiment configuration with section prefixes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use cropcast_core::assimilation::{AssimConfig, Descent, Method, MinimizerSettings};
use cropcast_core::crop_model::{CropState, ParamName, LAI, STATE_DIM};
use cropcast_core::forecaster::{DateSelector, Hyper, Optimizer};

use crate::error::{Context, Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub weather: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub bands: Option<PathBuf>,
    pub vi: Option<PathBuf>,
    /// `plot_id,date,lai` reference LAI for fitting the index inverter.
    pub lai_reference: Option<PathBuf>,
    /// `plot_id,date,dsm,dem` pairs of ASCII height rasters.
    pub rasters: Option<PathBuf>,
    /// `plot_id,date,cv,ch` canopy structure table.
    pub canopy: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub yields: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub paired: Option<PathBuf>,
}

impl Paths {
    fn all(&self) -> [(&'static str, &Option<PathBuf>); 13] {
        [
            ("weather", &self.weather),
            ("params", &self.params),
            ("observations", &self.observations),
            ("bands", &self.bands),
            ("vi", &self.vi),
            ("lai_reference", &self.lai_reference),
            ("rasters", &self.rasters),
            ("canopy", &self.canopy),
            ("trajectories", &self.trajectories),
            ("features", &self.features),
            ("yields", &self.yields),
            ("model", &self.model),
            ("paired", &self.paired),
        ]
    }

    fn slot(&mut self, name: &str) -> Option<&mut Option<PathBuf>> {
        Some(match name {
            "weather" => &mut self.weather,
            "params" => &mut self.params,
            "observations" => &mut self.observations,
            "bands" => &mut self.bands,
            "vi" => &mut self.vi,
            "lai_reference" => &mut self.lai_reference,
            "rasters" => &mut self.rasters,
            "canopy" => &mut self.canopy,
            "trajectories" => &mut self.trajectories,
            "features" => &mut self.features,
            "yields" => &mut self.yields,
            "model" => &mut self.model,
            "paired" => &mut self.paired,
            _ => return None,
        })
    }

    /// The configured path for `name`, or an input error naming the key.
    pub fn require(&self, name: &str) -> Result<&Path> {
        self.all()
            .into_iter()
            .find(|(n, _)| *n == name)
            .and_then(|(_, p)| p.as_deref())
            .ok_or_else(|| Error::input(format!("config key paths.{name} is required")))
    }
}

/// Initial crop pools, kg/ha.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialPools {
    pub dvs: f64,
    pub twlv: f64,
    pub twst: f64,
    pub twso: f64,
    pub twrt: f64,
}

impl Default for InitialPools {
    fn default() -> Self {
        Self {
            dvs: 0.0,
            twlv: 200.0,
            twst: 100.0,
            twso: 0.0,
            twrt: 80.0,
        }
    }
}

impl InitialPools {
    pub fn state(&self, sla: f64) -> CropState {
        CropState::from_pools(self.dvs, self.twlv, self.twst, self.twso, self.twrt, sla)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssimSettings {
    pub k: usize,
    pub q_lai: f64,
    pub tw0: usize,
    pub r0: f64,
    pub beta: f64,
    pub tw_min: usize,
    /// Defaults to the season length.
    pub tw_max: Option<usize>,
    pub inflation: f64,
    pub jitter: f64,
    pub qc_sigma: f64,
    pub minimizer: Descent,
    /// Relative standard deviation of the initial ensemble pools.
    pub spread: f64,
    pub methods: Vec<Method>,
}

impl Default for AssimSettings {
    fn default() -> Self {
        let d = AssimConfig::crop_default(1);
        Self {
            k: d.ensemble_size,
            q_lai: d.model_noise[LAI],
            tw0: d.tw0,
            r0: d.r0,
            beta: d.beta,
            tw_min: d.tw_min,
            tw_max: None,
            inflation: d.inflation,
            jitter: d.jitter,
            qc_sigma: d.qc_sigma,
            minimizer: d.minimizer.descent,
            spread: 0.1,
            methods: Method::ALL.to_vec(),
        }
    }
}

impl AssimSettings {
    pub fn assim_config(&self, season_len: usize, seed: u64) -> AssimConfig {
        let mut q = vec![0.0; STATE_DIM];
        q[LAI] = self.q_lai;
        AssimConfig {
            ensemble_size: self.k,
            model_noise: q,
            tw0: self.tw0,
            r0: self.r0,
            beta: self.beta,
            tw_min: self.tw_min,
            tw_max: self.tw_max.unwrap_or(season_len.max(self.tw0)),
            inflation: self.inflation,
            jitter: self.jitter,
            alpha_clamp: (0.0, 1.0),
            qc_sigma: self.qc_sigma,
            minimizer: MinimizerSettings {
                descent: self.minimizer,
                ..MinimizerSettings::default()
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinSettings {
    pub plots: usize,
    pub season_days: usize,
    pub start: NaiveDate,
    /// Observation days counted from the season start.
    pub obs_days: Vec<usize>,
    /// LAI observation noise standard deviation.
    pub sigma: f64,
    /// Background radiation-use efficiency bias, percent.
    pub perturbation_pct: f64,
    /// Relative spread of the true radiation-use efficiency across plots.
    pub plot_spread: f64,
    pub seeds: usize,
    /// Reflectance noise standard deviation.
    pub band_noise: f64,
    /// Surface model noise standard deviation, m.
    pub height_noise: f64,
    pub write_rasters: bool,
}

impl Default for TwinSettings {
    fn default() -> Self {
        Self {
            plots: 100,
            season_days: 200,
            start: NaiveDate::from_ymd_opt(2023, 3, 1).expect("valid date"),
            obs_days: (0..7).map(|i| 40 + 20 * i).collect(),
            sigma: 0.3,
            perturbation_pct: 15.0,
            plot_spread: 0.1,
            seeds: 20,
            band_noise: 0.01,
            height_noise: 0.02,
            write_rasters: false,
        }
    }
}

/// Which observation dates feed the yield regressor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    All,
    Dates(DateSelector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSettings {
    pub hyper: Hyper,
    pub select: Selection,
    /// Random-search trials; 0 trains the configured network directly.
    pub tune_budget: usize,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self {
            hyper: Hyper::default(),
            select: Selection::All,
            tune_budget: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrateSettings {
    pub params: Vec<ParamName>,
    /// Half-width of the search box relative to the base value.
    pub fraction: f64,
    pub budget: usize,
}

impl Default for CalibrateSettings {
    fn default() -> Self {
        Self {
            params: vec![ParamName::Rue],
            fraction: 0.2,
            budget: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvertSettings {
    pub rounds: usize,
    pub learning_rate: f64,
}

impl Default for InvertSettings {
    fn default() -> Self {
        Self {
            rounds: 300,
            learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportSettings {
    /// Record wall-clock times; off by default so reports are reproducible.
    pub wall_clock: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub initial: InitialPools,
    pub assim: AssimSettings,
    pub twin: TwinSettings,
    pub forecast: ForecastSettings,
    pub calibrate: CalibrateSettings,
    pub invert: InvertSettings,
    pub report: ReportSettings,
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::input(format!("line {}: expected key = value", i + 1)))?;
            let key = k.trim().to_string();
            if map.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::input(format!("line {}: duplicate key {key}", i + 1)));
            }
        }
        Ok(Self { map })
    }

    fn take<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some((line, v)) = self.map.remove(key) {
            *slot = v
                .parse()
                .map_err(|e| Error::input(format!("line {line}: {key}: {e}")))?;
        }
        Ok(())
    }

    fn take_with<T>(&mut self, key: &str, slot: &mut T, f: impl Fn(&str) -> Result<T>) -> Result<()> {
        if let Some((line, v)) = self.map.remove(key) {
            *slot = f(&v).context(format!("line {line}: {key}"))?;
        }
        Ok(())
    }
}

fn list<T: FromStr>(v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| Error::input(format!("`{s}`: {e}"))))
        .collect()
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::input(format!("expected true or false, got `{v}`"))),
    }
}

pub fn parse_selection(v: &str) -> Result<Selection> {
    if v == "all" {
        return Ok(Selection::All);
    }
    let (kind, n) = v
        .split_once(':')
        .ok_or_else(|| Error::input(format!("expected all, first:N or last:N, got `{v}`")))?;
    let n: usize = n
        .trim()
        .parse()
        .map_err(|_| Error::input(format!("bad date count in `{v}`")))?;
    match kind.trim() {
        "first" => Ok(Selection::Dates(DateSelector::First(n))),
        "last" => Ok(Selection::Dates(DateSelector::Last(n))),
        _ => Err(Error::input(format!("expected first or last, got `{kind}`"))),
    }
}

pub fn selection_text(s: Selection) -> String {
    match s {
        Selection::All => "all".into(),
        Selection::Dates(DateSelector::First(n)) => format!("first:{n}"),
        Selection::Dates(DateSelector::Last(n)) => format!("last:{n}"),
    }
}

fn parse_descent(v: &str) -> Result<Descent> {
    match v {
        "gauss_newton" => Ok(Descent::GaussNewton),
        "gradient" => Ok(Descent::Gradient),
        _ => Err(Error::input(format!("unknown minimizer `{v}`"))),
    }
}

fn parse_optimizer(v: &str) -> Result<Optimizer> {
    match v {
        "adam" => Ok(Optimizer::Adam),
        "sgd" => Ok(Optimizer::Sgd),
        _ => Err(Error::input(format!("unknown optimizer `{v}`"))),
    }
}

impl ExperimentConfig {
    /// Parse config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let mut c = ExperimentConfig::default();

        let path_keys: Vec<String> = e
            .map
            .keys()
            .filter(|k| k.starts_with("paths."))
            .cloned()
            .collect();
        for key in path_keys {
            let (line, v) = e.map.remove(&key).expect("key listed");
            let slot = c
                .paths
                .slot(&key["paths.".len()..])
                .ok_or_else(|| Error::input(format!("line {line}: unknown key {key}")))?;
            *slot = Some(base.join(v));
        }

        let i = &mut c.initial;
        e.take("crop.init.dvs", &mut i.dvs)?;
        e.take("crop.init.twlv", &mut i.twlv)?;
        e.take("crop.init.twst", &mut i.twst)?;
        e.take("crop.init.twso", &mut i.twso)?;
        e.take("crop.init.twrt", &mut i.twrt)?;

        let a = &mut c.assim;
        e.take("assim.k", &mut a.k)?;
        e.take("assim.q_lai", &mut a.q_lai)?;
        e.take("assim.tw0", &mut a.tw0)?;
        e.take("assim.r0", &mut a.r0)?;
        e.take("assim.beta", &mut a.beta)?;
        e.take("assim.tw_min", &mut a.tw_min)?;
        e.take_with("assim.tw_max", &mut a.tw_max, |v| {
            v.parse().map(Some).map_err(|_| Error::input(format!("bad integer `{v}`")))
        })?;
        e.take("assim.inflation", &mut a.inflation)?;
        e.take("assim.jitter", &mut a.jitter)?;
        e.take("assim.qc_sigma", &mut a.qc_sigma)?;
        e.take_with("assim.minimizer", &mut a.minimizer, parse_descent)?;
        e.take("assim.spread", &mut a.spread)?;
        e.take_with("assim.methods", &mut a.methods, list)?;

        let t = &mut c.twin;
        e.take("twin.plots", &mut t.plots)?;
        e.take("twin.season_days", &mut t.season_days)?;
        e.take("twin.start", &mut t.start)?;
        e.take_with("twin.obs_days", &mut t.obs_days, list)?;
        e.take("twin.sigma", &mut t.sigma)?;
        e.take("twin.perturbation_pct", &mut t.perturbation_pct)?;
        e.take("twin.plot_spread", &mut t.plot_spread)?;
        e.take("twin.seeds", &mut t.seeds)?;
        e.take("twin.band_noise", &mut t.band_noise)?;
        e.take("twin.height_noise", &mut t.height_noise)?;
        e.take_with("twin.write_rasters", &mut t.write_rasters, parse_bool)?;

        let f = &mut c.forecast;
        e.take("forecast.hidden", &mut f.hyper.hidden)?;
        e.take("forecast.learning_rate", &mut f.hyper.learning_rate)?;
        e.take("forecast.max_epochs", &mut f.hyper.max_epochs)?;
        e.take("forecast.batch_size", &mut f.hyper.batch_size)?;
        e.take("forecast.patience", &mut f.hyper.patience)?;
        e.take_with("forecast.optimizer", &mut f.hyper.optimizer, parse_optimizer)?;
        e.take_with("forecast.select", &mut f.select, parse_selection)?;
        e.take("forecast.tune_budget", &mut f.tune_budget)?;

        let k = &mut c.calibrate;
        e.take_with("calibrate.params", &mut k.params, list)?;
        e.take("calibrate.fraction", &mut k.fraction)?;
        e.take("calibrate.budget", &mut k.budget)?;

        e.take("invert.rounds", &mut c.invert.rounds)?;
        e.take("invert.learning_rate", &mut c.invert.learning_rate)?;

        e.take_with("report.wall_clock", &mut c.report.wall_clock, parse_bool)?;

        if let Some((key, (line, _))) = e.map.into_iter().next() {
            return Err(Error::input(format!("line {line}: unknown key {key}")));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).in_file(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).in_file(path)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in self.paths.all() {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::input(format!(
                        "paths.{name}: {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        let t = &self.twin;
        if t.seeds == 0 {
            return Err(Error::input("twin.seeds must be >= 1"));
        }
        if t.plots < 5 {
            return Err(Error::input("twin.plots must be >= 5 for a 3:1:1 split"));
        }
        if t.season_days == 0 {
            return Err(Error::input("twin.season_days must be >= 1"));
        }
        for (name, v) in [
            ("twin.sigma", t.sigma),
            ("twin.perturbation_pct", t.perturbation_pct),
            ("twin.plot_spread", t.plot_spread),
            ("twin.band_noise", t.band_noise),
            ("twin.height_noise", t.height_noise),
            ("assim.spread", self.assim.spread),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::input(format!("{name} must be finite and >= 0")));
            }
        }
        if let Some(d) = t.obs_days.iter().find(|d| **d > t.season_days) {
            return Err(Error::input(format!(
                "observation day {d} lies outside the {}-day season",
                t.season_days
            )));
        }
        if t.obs_days.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::input("twin.obs_days must be strictly increasing"));
        }
        if self.assim.methods.is_empty() {
            return Err(Error::input("assim.methods must name at least one method"));
        }
        self.assim
            .assim_config(t.season_days, 0)
            .validate(STATE_DIM)
            .context("assim")?;
        self.forecast.hyper.validate().context("forecast")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let c = ExperimentConfig::parse("# nothing\n", Path::new(".")).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.assim.k, 50);
        assert_eq!(c.twin.obs_days.len(), 7);
    }

    #[test]
    fn sections_override_defaults() {
        let text = "assim.k = 20\nassim.methods = ww4ves, enkf\ntwin.sigma=0\n\
                    forecast.select = last:3 # trailing comment\nreport.wall_clock=true\n";
        let c = ExperimentConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(c.assim.k, 20);
        assert_eq!(c.assim.methods, vec![Method::Ww4ves, Method::Enkf]);
        assert_eq!(c.twin.sigma, 0.0);
        assert_eq!(c.forecast.select, Selection::Dates(DateSelector::Last(3)));
        assert!(c.report.wall_clock);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed_keys() {
        for bad in [
            "assim.kk = 3",
            "assim.k = 3\nassim.k = 4",
            "assim.k 3",
            "assim.k = many",
            "twin.seeds = 0",
            "twin.obs_days = 10, 500",
            "assim.methods = kalman",
            "paths.weather = /definitely/missing.csv",
            "paths.elsewhere = x",
        ] {
            let err = ExperimentConfig::parse(bad, Path::new(".")).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn selection_round_trips() {
        for s in ["all", "first:4", "last:7"] {
            assert_eq!(selection_text(parse_selection(s).unwrap()), s);
        }
    }
}
