//! Pipeline stages shared by the subcommands and the end-to-end run.

use chrono::NaiveDate;
use cropcast_core::assimilation::{run_method, AssimRun, Ensemble, Method};
use cropcast_core::crop_model::{CropDynamics, CropParams, CropState, WeatherDay};
use cropcast_core::forecaster::{
    assemble_features, fit_predictor, join_yields, predict_yield, tune_predictor, DateSelector,
    FeatureRow, HyperSpace, Predictor, YieldRecord,
};
use cropcast_core::metrics::{r_squared, rmse, PairedSeries};
use cropcast_core::observation::ObservationSeries;
use cropcast_core::remote_sensing::{canopy_height, canopy_volume, split_dataset, Raster, ViVector};
use cropcast_core::rng::{derive_seed, stream};
use rand_distr::{Distribution, StandardNormal};

use crate::config::{AssimSettings, ForecastSettings, Selection};
use crate::error::{Context, Error, Result};
use crate::io::{self, PairedRow};
use crate::twin::{PURPOSE_ASSIM, PURPOSE_ENSEMBLE, PURPOSE_SPLIT, PURPOSE_TRAIN};

/// Canopy volume and mean canopy height from surface and terrain models.
pub fn canopy_structure(dsm: &Raster, dem: &Raster) -> Result<(f64, f64)> {
    let h = canopy_height(dsm, dem)?.heights;
    let cv = canopy_volume(&h, |_, _| true)?;
    let cells: Vec<f64> = h.values().iter().copied().filter(|v| !h.is_nodata(*v)).collect();
    let ch = cells.iter().sum::<f64>() / cells.len() as f64;
    Ok((cv, ch))
}

/// Members scatter every initial pool by the same relative factor.
pub fn initial_ensemble(initial: &CropState, sla: f64, k: usize, spread: f64, seed: u64) -> Result<Ensemble> {
    let members: Vec<Vec<f64>> = (0..k as u64)
        .map(|m| {
            let z: f64 = StandardNormal.sample(&mut stream(seed, m));
            let f = (1.0 + spread * z).max(0.0);
            CropState::from_pools(
                initial.dvs,
                initial.twlv * f,
                initial.twst * f,
                initial.twso * f,
                initial.twrt * f,
                sla,
            )
            .to_array()
            .to_vec()
        })
        .collect();
    Ok(Ensemble::from_members(&members)?)
}

/// Assimilate one plot; `plot` selects its random streams under `seed`.
#[allow(clippy::too_many_arguments)]
pub fn assimilate_plot(
    method: Method,
    params: &CropParams,
    weather: &[WeatherDay],
    initial: &CropState,
    obs: &ObservationSeries,
    settings: &AssimSettings,
    seed: u64,
    plot: u64,
) -> Result<AssimRun> {
    let ens = initial_ensemble(
        initial,
        params.sla,
        settings.k,
        settings.spread,
        derive_seed(seed, PURPOSE_ENSEMBLE, plot),
    )?;
    let cfg = settings.assim_config(weather.len(), derive_seed(seed, PURPOSE_ASSIM, plot));
    let dynamics = CropDynamics::new(params, weather);
    Ok(run_method(method, &dynamics, &ens, obs, &cfg)?)
}

/// Pooled LAI root-mean-square error of ensemble means against truth.
pub fn lai_rmse<'a>(pairs: impl Iterator<Item = (&'a AssimRun, &'a [CropState])>) -> f64 {
    let (mut se, mut n) = (0.0, 0usize);
    for (run, truth) in pairs {
        for (m, s) in run.means.iter().zip(truth) {
            let e = m[cropcast_core::crop_model::LAI] - s.lai;
            se += e * e;
            n += 1;
        }
    }
    (se / n.max(1) as f64).sqrt()
}

/// Inputs observed on one date for one plot, before joining the pools.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedDate {
    pub date: NaiveDate,
    pub day: usize,
    pub vi: ViVector,
    pub cv: f64,
    pub ch: f64,
    pub lai: f64,
}

/// Join sensed inputs with the analysis pools of the same day.
pub fn feature_rows(plot_id: &str, sensed: &[SensedDate], means: &[CropState]) -> Result<Vec<FeatureRow>> {
    sensed
        .iter()
        .map(|s| {
            let x = means.get(s.day).ok_or_else(|| {
                Error::input(format!(
                    "plot {plot_id}: no state for {} (day {})",
                    s.date, s.day
                ))
            })?;
            Ok(FeatureRow {
                plot_id: plot_id.to_string(),
                date: s.date,
                dvd: s.day as u32,
                vi: s.vi,
                cv: s.cv,
                ch: s.ch,
                lai: s.lai,
                tagp: x.tagp(),
                twso: x.twso,
                twlv: x.twlv,
                twst: x.twst,
                twrt: x.twrt,
            })
        })
        .collect()
}

/// `All` becomes the largest date count every plot can supply.
pub fn resolve_selection(sel: Selection, rows: &[FeatureRow]) -> Result<DateSelector> {
    match sel {
        Selection::Dates(d) => Ok(d),
        Selection::All => {
            let groups = io::group_by_plot(rows, |r| Some(r.plot_id.as_str()));
            let n = groups.iter().map(|g| g.1.len()).min().unwrap_or(0);
            if n == 0 {
                return Err(Error::input("no feature dates to select"));
            }
            Ok(DateSelector::Last(n))
        }
    }
}

/// Plot ids split 3:1:1 into training, validation and test sets.
pub fn split_plots(ids: Vec<String>, seed: u64) -> Result<(Vec<String>, Vec<String>, Vec<String>)> {
    Ok(split_dataset(ids, derive_seed(seed, PURPOSE_SPLIT, 0))?)
}

type Designs = Vec<(String, Vec<f64>, f64)>;

/// Design vectors with yields, partitioned by the plot split.
pub fn partition(
    rows: &[FeatureRow],
    yields: &[YieldRecord],
    sel: DateSelector,
    split: &(Vec<String>, Vec<String>, Vec<String>),
) -> Result<(Designs, Designs, Designs)> {
    let designs = assemble_features(rows, sel)?;
    let joined = join_yields(&designs, yields)?;
    let all: Vec<(String, Vec<f64>, f64)> = designs
        .into_iter()
        .zip(joined)
        .map(|((id, _), (x, y))| (id, x, y))
        .collect();
    let pick = |ids: &[String]| -> Result<Designs> {
        ids.iter()
            .map(|id| {
                all.iter()
                    .find(|d| &d.0 == id)
                    .cloned()
                    .ok_or_else(|| Error::input(format!("no features for plot {id}")))
            })
            .collect()
    };
    Ok((pick(&split.0)?, pick(&split.1)?, pick(&split.2)?))
}

fn xy(d: &Designs) -> Vec<(Vec<f64>, f64)> {
    d.iter().map(|(_, x, y)| (x.clone(), *y)).collect()
}

pub fn train_yield_model(train: &Designs, val: &Designs, f: &ForecastSettings, seed: u64) -> Result<Predictor> {
    let s = derive_seed(seed, PURPOSE_TRAIN, 0);
    let (train, val) = (xy(train), xy(val));
    if f.tune_budget > 0 {
        let tuned = tune_predictor(&train, &val, &f.hyper, &HyperSpace::default(), f.tune_budget, s)?;
        Ok(tuned.model)
    } else {
        Ok(fit_predictor(&train, &val, &f.hyper, s)?.0)
    }
}

pub fn predict(model: &Predictor, designs: &Designs) -> Result<Vec<PairedRow>> {
    designs
        .iter()
        .map(|(id, x, y)| {
            Ok(PairedRow {
                plot_id: id.clone(),
                measured: *y,
                predicted: predict_yield(model, x).context(format!("plot {id}"))?,
            })
        })
        .collect()
}

/// RMSE and, where defined, R² of paired yields.
pub fn evaluate(rows: &[PairedRow]) -> Result<(f64, std::result::Result<f64, cropcast_core::Error>)> {
    let s = PairedSeries::new(
        rows.iter().map(|r| r.measured).collect(),
        rows.iter().map(|r| r.predicted).collect(),
    )?;
    Ok((rmse(&s), r_squared(&s)))
}
