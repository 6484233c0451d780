//! Synthetic twin experiment: a known truth per plot, noisy LAI
//! observations, reflectance bands and height rasters derived from it.

use std::path::Path;

use chrono::NaiveDate;
use cropcast_core::crop_model::{simulate, CropParams, CropState, WeatherDay};
use cropcast_core::forecaster::YieldRecord;
use cropcast_core::observation::{Observation, ObservationSeries};
use cropcast_core::remote_sensing::{BandSample, Raster};
use cropcast_core::rng::{derive_seed, stream, Rng};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{InitialPools, TwinSettings};
use crate::error::{Context, Error, Result};
use crate::io;

/// Observation variance used when the configured noise is zero.
pub const VAR_FLOOR: f64 = 1e-6;

pub(crate) const PURPOSE_TRUTH: u64 = 1;
pub(crate) const PURPOSE_OBS: u64 = 2;
pub(crate) const PURPOSE_BANDS: u64 = 3;
pub(crate) const PURPOSE_TERRAIN: u64 = 4;
pub(crate) const PURPOSE_ENSEMBLE: u64 = 5;
pub(crate) const PURPOSE_ASSIM: u64 = 6;
pub(crate) const PURPOSE_SPLIT: u64 = 7;
pub(crate) const PURPOSE_TRAIN: u64 = 8;

const SOIL: [f64; 5] = [0.06, 0.09, 0.12, 0.16, 0.22];
const CANOPY: [f64; 5] = [0.03, 0.08, 0.03, 0.22, 0.48];
const GRID: usize = 6;
const CELL: f64 = 0.25;
const MAX_HEIGHT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotTwin {
    pub id: String,
    pub truth_params: CropParams,
    /// Daily truth states, one more than the number of weather days.
    pub truth: Vec<CropState>,
    pub observations: ObservationSeries,
    /// Reflectance at each observation day.
    pub bands: Vec<BandSample>,
    /// Surface and terrain rasters at each observation day.
    pub dsm: Vec<Raster>,
    pub dem: Raster,
    pub yield_kg_ha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Twin {
    pub start: NaiveDate,
    pub weather: Vec<WeatherDay>,
    pub background: CropParams,
    pub initial: CropState,
    pub obs_days: Vec<usize>,
    pub plots: Vec<PlotTwin>,
}

/// Smooth spring warming and brightening over `days` days.
pub fn synthetic_weather(start: NaiveDate, days: usize) -> Vec<WeatherDay> {
    (0..days)
        .map(|i| {
            let f = i as f64 / days as f64;
            WeatherDay::new(io::date_at(start, i), 4.0 + 14.0 * f, 2.5 + 3.5 * f)
        })
        .collect()
}

fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Canopy reflectance mixed with soil by fractional cover, plus sensor noise.
fn reflectance(lai: f64, soil_brightness: f64, noise: f64, rng: &mut Rng) -> Result<BandSample> {
    let cover = 1.0 - (-0.5 * lai.max(0.0)).exp();
    let mut v = [0.0; 5];
    for (j, x) in v.iter_mut().enumerate() {
        let mixed = cover * CANOPY[j] + (1.0 - cover) * SOIL[j] * soil_brightness;
        *x = (mixed + noise * normal(rng)).clamp(0.001, 1.0);
    }
    Ok(BandSample::new(v[0], v[1], v[2], v[3], v[4])?)
}

fn terrain(rng: &mut Rng) -> Result<Raster> {
    let base = 100.0 + 5.0 * rng.random::<f64>();
    let (sx, sy) = (0.05 * normal(rng), 0.05 * normal(rng));
    let values = (0..GRID * GRID)
        .map(|i| base + sx * (i % GRID) as f64 * CELL + sy * (i / GRID) as f64 * CELL)
        .collect();
    Ok(Raster::new(GRID, GRID, CELL, values, -9999.0)?)
}

fn surface(dem: &Raster, height: f64, noise: f64, rng: &mut Rng) -> Result<Raster> {
    let values = dem
        .values()
        .iter()
        .map(|z| z + height * (0.85 + 0.3 * rng.random::<f64>()) + noise * normal(rng))
        .collect();
    Ok(Raster::new(GRID, GRID, CELL, values, dem.nodata())?)
}

/// Canopy height grows with above-ground biomass toward a ceiling.
pub fn canopy_height_of(state: &CropState) -> f64 {
    MAX_HEIGHT * (1.0 - (-state.tagp() / 4000.0).exp())
}

pub fn plot_id(i: usize) -> String {
    format!("p{:04}", i + 1)
}

/// Truth per plot from `truth_base` with its radiation-use efficiency
/// scattered across plots; the background uses the biased efficiency.
pub fn generate_twin(
    s: &TwinSettings,
    truth_base: &CropParams,
    initial: &InitialPools,
    seed: u64,
) -> Result<Twin> {
    if !(s.sigma >= 0.0) || !(s.perturbation_pct >= 0.0) {
        return Err(Error::input("twin noise and perturbation must be >= 0"));
    }
    if let Some(d) = s.obs_days.iter().find(|d| **d > s.season_days) {
        return Err(Error::input(format!(
            "observation day {d} lies outside the {}-day season",
            s.season_days
        )));
    }
    let weather = synthetic_weather(s.start, s.season_days);
    let mut background = truth_base.clone();
    background.rue *= 1.0 + s.perturbation_pct / 100.0;
    let init = initial.state(truth_base.sla);
    let var = (s.sigma * s.sigma).max(VAR_FLOOR);

    let plots = (0..s.plots)
        .map(|p| {
            let id = plot_id(p);
            let mut truth_params = truth_base.clone();
            let mut rng = stream(derive_seed(seed, PURPOSE_TRUTH, p as u64), 0);
            truth_params.rue *= (1.0 + s.plot_spread * normal(&mut rng)).max(0.2);
            let truth = simulate(&truth_params, &weather, &init).context(&id)?;

            let mut rng = stream(derive_seed(seed, PURPOSE_OBS, p as u64), 0);
            let obs = s
                .obs_days
                .iter()
                .map(|&t| Observation::scalar(t, cropcast_core::crop_model::LAI, truth[t].lai + s.sigma * normal(&mut rng), var))
                .collect::<std::result::Result<Vec<_>, _>>()?;

            let mut rng = stream(derive_seed(seed, PURPOSE_BANDS, p as u64), 0);
            let soil = (1.0 + 0.1 * normal(&mut rng)).clamp(0.5, 1.5);
            let bands = s
                .obs_days
                .iter()
                .map(|&t| reflectance(truth[t].lai, soil, s.band_noise, &mut rng))
                .collect::<Result<Vec<_>>>()?;

            let mut rng = stream(derive_seed(seed, PURPOSE_TERRAIN, p as u64), 0);
            let dem = terrain(&mut rng)?;
            let dsm = s
                .obs_days
                .iter()
                .map(|&t| surface(&dem, canopy_height_of(&truth[t]), s.height_noise, &mut rng))
                .collect::<Result<Vec<_>>>()?;

            let yield_kg_ha = truth.last().map_or(0.0, |x| x.twso);
            Ok(PlotTwin {
                id,
                truth_params,
                truth,
                observations: ObservationSeries::new(obs)?,
                bands,
                dsm,
                dem,
                yield_kg_ha,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Twin {
        start: s.start,
        weather,
        background,
        initial: init,
        obs_days: s.obs_days.clone(),
        plots,
    })
}

impl Twin {
    pub fn obs_dates(&self) -> Vec<NaiveDate> {
        self.obs_days.iter().map(|&t| io::date_at(self.start, t)).collect()
    }

    pub fn yields(&self) -> Result<Vec<YieldRecord>> {
        self.plots
            .iter()
            .map(|p| Ok(YieldRecord::new(&p.id, p.yield_kg_ha)?))
            .collect()
    }

    pub fn observation_records(&self) -> Vec<io::ObsRecord> {
        self.plots
            .iter()
            .flat_map(|p| {
                p.observations.entries().iter().map(|o| io::ObsRecord {
                    plot_id: Some(p.id.clone()),
                    date: io::date_at(self.start, o.time),
                    lai: o.values[0],
                    lai_var: o.variances[0],
                })
            })
            .collect()
    }

    pub fn band_rows(&self) -> Vec<io::BandRow> {
        let dates = self.obs_dates();
        self.plots
            .iter()
            .flat_map(|p| {
                p.bands.iter().zip(&dates).map(|(b, d)| io::BandRow {
                    plot_id: p.id.clone(),
                    date: *d,
                    sample: *b,
                })
            })
            .collect()
    }

    /// Write every twin artifact under `dir`.
    pub fn write(&self, dir: &Path, with_rasters: bool) -> Result<()> {
        io::write_weather(&dir.join("weather.csv"), &self.weather)?;
        io::write_text(&dir.join("background_params.txt"), &io::params_text(&self.background))?;
        let truth_rue: String = self
            .plots
            .iter()
            .map(|p| format!("{},{}\n", p.id, io::fmt_f(p.truth_params.rue)))
            .collect();
        io::write_text(&dir.join("truth_rue.csv"), &format!("plot_id,rue\n{truth_rue}"))?;
        let truth: Vec<io::TrajectoryRow> = self
            .plots
            .iter()
            .flat_map(|p| {
                p.truth.iter().enumerate().map(|(t, s)| io::TrajectoryRow {
                    plot_id: Some(p.id.clone()),
                    date: io::date_at(self.start, t),
                    state: *s,
                })
            })
            .collect();
        io::write_trajectories(&dir.join("truth.csv"), &truth)?;
        io::write_observations(&dir.join("observations.csv"), &self.observation_records())?;
        io::write_bands(&dir.join("bands.csv"), &self.band_rows())?;
        io::write_yields(&dir.join("yields.csv"), &self.yields()?)?;
        if with_rasters {
            self.write_rasters(&dir.join("rasters"))?;
        }
        Ok(())
    }

    fn write_rasters(&self, dir: &Path) -> Result<()> {
        let mut manifest = String::from("plot_id,date,dsm,dem\n");
        for p in &self.plots {
            let dem_name = format!("{}_dem.asc", p.id);
            io::write_text(&dir.join(&dem_name), &io::raster_text(&p.dem))?;
            for (dsm, date) in p.dsm.iter().zip(self.obs_dates()) {
                let name = format!("{}_{date}_dsm.asc", p.id);
                io::write_text(&dir.join(&name), &io::raster_text(dsm))?;
                manifest.push_str(&format!("{},{date},{name},{dem_name}\n", p.id));
            }
        }
        io::write_text(&dir.join("manifest.csv"), &manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cropcast_core::crop_model::LAI;

    fn settings() -> TwinSettings {
        TwinSettings {
            plots: 5,
            ..TwinSettings::default()
        }
    }

    #[test]
    fn noiseless_observations_equal_truth() {
        let s = TwinSettings { sigma: 0.0, ..settings() };
        let tw = generate_twin(&s, &CropParams::default(), &InitialPools::default(), 1).unwrap();
        for p in &tw.plots {
            for o in p.observations.entries() {
                assert_eq!(o.values[0], p.truth[o.time].lai);
                assert_eq!(o.variances[0], VAR_FLOOR);
                assert_eq!(o.selector, vec![LAI]);
            }
        }
    }

    #[test]
    fn schema_matches_configuration() {
        let tw = generate_twin(&settings(), &CropParams::default(), &InitialPools::default(), 1).unwrap();
        assert_eq!(tw.plots.len(), 5);
        assert_eq!(tw.weather.len(), 200);
        for p in &tw.plots {
            assert_eq!(p.observations.len(), 7);
            assert_eq!(p.bands.len(), 7);
            assert_eq!(p.truth.len(), 201);
            assert_eq!(p.yield_kg_ha, p.truth[200].twso);
            assert!(p.yield_kg_ha > 0.0);
        }
        assert!((tw.background.rue - 1.15 * CropParams::default().rue).abs() < 1e-12);
    }

    #[test]
    fn seeds_fix_everything() {
        let a = generate_twin(&settings(), &CropParams::default(), &InitialPools::default(), 3).unwrap();
        let b = generate_twin(&settings(), &CropParams::default(), &InitialPools::default(), 3).unwrap();
        let c = generate_twin(&settings(), &CropParams::default(), &InitialPools::default(), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.plots[0].truth_params, c.plots[0].truth_params);
    }

    #[test]
    fn rejects_days_outside_the_season() {
        let s = TwinSettings { obs_days: vec![10, 201], ..settings() };
        let e = generate_twin(&s, &CropParams::default(), &InitialPools::default(), 1).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn denser_canopy_reflects_more_nir_and_less_red() {
        let mut rng = stream(0, 0);
        let sparse = reflectance(0.1, 1.0, 0.0, &mut rng).unwrap();
        let dense = reflectance(5.0, 1.0, 0.0, &mut rng).unwrap();
        assert!(dense.nir > sparse.nir && dense.r < sparse.r);
    }
}
