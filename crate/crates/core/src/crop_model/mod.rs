//! Daily crop growth surrogate.
//!
//! A five-pool light-use-efficiency model: thermal time drives development,
//! intercepted radiation drives dry-matter growth, which is partitioned over
//! roots, leaves, stems and storage organs. LAI is diagnostic of leaf mass
//! (`lai = sla * twlv`), so any external change to LAI maps back onto leaves.

mod calibrate;
mod params;

pub use calibrate::{
    calibrate, calibrate_candidates, lai_cost, Calibration, ParamSpace, LAI_COST_EPS,
};
pub use params::{CropParams, ParamName, PartitionTable};

use alloc::vec::Vec;
use chrono::NaiveDate;

use crate::assimilation::Dynamics;
use crate::error::{Error, Result};

/// Number of components in the state vector form of [`CropState`].
pub const STATE_DIM: usize = 6;
/// State-vector component indices.
pub const DVS: usize = 0;
pub const LAI: usize = 1;
pub const TWLV: usize = 2;
pub const TWST: usize = 3;
pub const TWSO: usize = 4;
pub const TWRT: usize = 5;

pub const MAX_DVS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropState {
    pub dvs: f64,
    pub lai: f64,
    pub twlv: f64,
    pub twst: f64,
    pub twso: f64,
    pub twrt: f64,
}

impl CropState {
    /// Builds a state whose LAI is derived from leaf mass.
    pub fn from_pools(dvs: f64, twlv: f64, twst: f64, twso: f64, twrt: f64, sla: f64) -> Self {
        Self {
            dvs,
            lai: sla * twlv,
            twlv,
            twst,
            twso,
            twrt,
        }
    }

    /// Total above-ground production.
    pub fn tagp(&self) -> f64 {
        self.twlv + self.twst + self.twso
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::invalid("non-finite crop state"));
        }
        if self.lai < 0.0
            || self.twlv < 0.0
            || self.twst < 0.0
            || self.twso < 0.0
            || self.twrt < 0.0
        {
            return Err(Error::invalid("negative LAI or biomass pool"));
        }
        if !(0.0..=MAX_DVS).contains(&self.dvs) {
            return Err(Error::invalid("development stage outside [0, 2]"));
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.dvs, self.lai, self.twlv, self.twst, self.twso, self.twrt,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            dvs: x[DVS],
            lai: x[LAI],
            twlv: x[TWLV],
            twst: x[TWST],
            twso: x[TWSO],
            twrt: x[TWRT],
        }
    }

    pub fn write_to(&self, x: &mut [f64]) {
        x[..STATE_DIM].copy_from_slice(&self.to_array());
    }

    /// Projects an arbitrary (finite) vector back onto the valid state set.
    ///
    /// Pools are clamped at zero and dvs into `[0, 2]`. LAI is treated as the
    /// authoritative leaf variable: leaf mass is reset to `lai / sla` and LAI
    /// is then recomputed from it so `lai == sla * twlv` holds exactly.
    pub fn project(x: &mut [f64], sla: f64) {
        x[DVS] = x[DVS].clamp(0.0, MAX_DVS);
        for c in [TWST, TWSO, TWRT] {
            x[c] = x[c].max(0.0);
        }
        let lai = x[LAI].max(0.0);
        x[TWLV] = lai / sla;
        x[LAI] = sla * x[TWLV];
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherDay {
    pub date: NaiveDate,
    /// Daily mean temperature, °C.
    pub tavg: f64,
    /// Net solar radiation, MJ/m²/day.
    pub rad: f64,
    /// mm/day.
    pub precip: f64,
    pub dewpoint: f64,
    /// m/s.
    pub wind: f64,
}

impl WeatherDay {
    pub fn new(date: NaiveDate, tavg: f64, rad: f64) -> Self {
        Self {
            date,
            tavg,
            rad,
            precip: 0.0,
            dewpoint: 0.0,
            wind: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.tavg, self.rad, self.precip, self.dewpoint, self.wind];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite weather value"));
        }
        if self.rad < 0.0 || self.precip < 0.0 {
            return Err(Error::invalid("negative radiation or precipitation"));
        }
        Ok(())
    }
}

/// Checks every day and that dates are strictly increasing.
pub fn validate_weather(weather: &[WeatherDay]) -> Result<()> {
    for d in weather {
        d.validate()?;
    }
    if weather.windows(2).any(|w| w[0].date >= w[1].date) {
        return Err(Error::invalid("weather dates must be strictly increasing"));
    }
    Ok(())
}

/// Advances the crop by one day.
pub fn step(state: &CropState, day: &WeatherDay, params: &CropParams) -> Result<CropState> {
    if !state.is_finite() || !day.tavg.is_finite() || !day.rad.is_finite() {
        return Err(Error::invalid("non-finite input to crop step"));
    }
    if state.dvs >= MAX_DVS {
        return Ok(*state);
    }

    let dtt = (day.tavg - params.tbase).max(0.0);
    let rate = if state.dvs < 1.0 {
        dtt / params.tsum1
    } else {
        dtt / params.tsum2
    };
    let dvs = (state.dvs + rate).min(MAX_DVS);

    let fint = 1.0 - libm::exp(-params.kext * state.lai);
    // g/m² -> kg/ha
    let dw = params.rue * day.rad * fint * 10.0;
    let d_root = params.fr * dw;
    let above = dw - d_root;
    let [fl, fs, fo] = params.part_table.at(dvs);

    let mut twlv = state.twlv + fl * above;
    if dvs > 1.0 {
        twlv -= params.rdr * twlv;
    }
    let twlv = twlv.max(0.0);

    Ok(CropState {
        dvs,
        lai: params.sla * twlv,
        twlv,
        twst: (state.twst + fs * above).max(0.0),
        twso: (state.twso + fo * above).max(0.0),
        twrt: (state.twrt + d_root).max(0.0),
    })
}

/// Runs the model over a weather series; `trajectory[0] == initial`.
pub fn simulate(
    params: &CropParams,
    weather: &[WeatherDay],
    initial: &CropState,
) -> Result<Vec<CropState>> {
    if weather.is_empty() {
        return Err(Error::invalid("empty weather series"));
    }
    validate_weather(weather)?;
    initial.validate()?;
    let mut out = Vec::with_capacity(weather.len() + 1);
    out.push(*initial);
    let mut state = *initial;
    for day in weather {
        state = step(&state, day, params)?;
        out.push(state);
    }
    Ok(out)
}

/// Adapter exposing the surrogate through the generic [`Dynamics`] interface.
#[derive(Debug, Clone, Copy)]
pub struct CropDynamics<'a> {
    pub params: &'a CropParams,
    pub weather: &'a [WeatherDay],
}

impl<'a> CropDynamics<'a> {
    pub fn new(params: &'a CropParams, weather: &'a [WeatherDay]) -> Self {
        Self { params, weather }
    }
}

impl Dynamics for CropDynamics<'_> {
    fn dim(&self) -> usize {
        STATE_DIM
    }

    fn steps(&self) -> usize {
        self.weather.len()
    }

    fn advance(&self, t: usize, x: &mut [f64]) -> Result<()> {
        let day = self
            .weather
            .get(t)
            .ok_or_else(|| Error::invalid("time index beyond weather series"))?;
        let next = step(&CropState::from_slice(x), day, self.params)?;
        next.write_to(x);
        Ok(())
    }

    fn project(&self, x: &mut [f64]) {
        CropState::project(x, self.params.sla);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn day(tavg: f64, rad: f64) -> WeatherDay {
        WeatherDay::new(NaiveDate::from_ymd_opt(2023, 3, 1).unwrap(), tavg, rad)
    }

    fn season(n: usize) -> Vec<WeatherDay> {
        let start = NaiveDate::from_ymd_opt(2023, 3, 1).unwrap();
        (0..n)
            .map(|i| {
                let f = i as f64 / n as f64;
                WeatherDay::new(
                    start + chrono::Days::new(i as u64),
                    6.0 + 12.0 * f,
                    8.0 + 4.0 * f,
                )
            })
            .collect()
    }

    #[test]
    fn maturity_freezes_state() {
        let p = CropParams::default();
        let s = CropState::from_pools(2.0, 100.0, 2000.0, 5000.0, 800.0, p.sla);
        assert_eq!(step(&s, &day(25.0, 20.0), &p).unwrap(), s);
    }

    #[test]
    fn zero_forcing_is_identity() {
        let p = CropParams::default();
        let s = CropState::from_pools(0.4, 300.0, 200.0, 0.0, 80.0, p.sla);
        let next = step(&s, &day(p.tbase, 0.0), &p).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn hand_evaluated_growth_increment() {
        let mut p = CropParams::default();
        p.rue = 3.0;
        p.kext = 0.6;
        p.fr = 0.2;
        p.part_table = PartitionTable::constant([0.6, 0.4, 0.0]);
        let s = CropState::from_pools(0.2, 1.0 / p.sla, 0.0, 0.0, 0.0, p.sla);
        assert_eq!(s.lai, 1.0);
        let next = step(&s, &day(10.0, 10.0), &p).unwrap();
        assert!(next.dvs < 1.0);
        // dW = 3 * 10 * (1 - e^-0.6) * 10
        let dw = 300.0 * (1.0 - (-0.6f64).exp());
        assert_eq!((dw * 100.0).round() / 100.0, 135.36);
        let dtwlv = next.twlv - s.twlv;
        assert!((dtwlv - 0.8 * 0.6 * dw).abs() <= 1e-9 * dtwlv);
        assert_eq!((dtwlv * 100.0).round() / 100.0, 64.97);
        assert!((next.twrt - 0.2 * dw).abs() <= 1e-9 * dw);
        assert_eq!(next.twso, 0.0);
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = CropParams::default();
        let s = CropState::from_pools(0.1, 10.0, 0.0, 0.0, 0.0, p.sla);
        assert!(matches!(
            step(&s, &day(f64::NAN, 1.0), &p),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn simulate_length_contract() {
        let p = CropParams::default();
        let s = CropState::from_pools(0.0, 40.0, 20.0, 0.0, 10.0, p.sla);
        let traj = simulate(&p, &season(1), &s).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj[0], s);
        assert!(simulate(&p, &[], &s).is_err());
    }

    #[test]
    fn zero_radiation_season_keeps_storage_constant() {
        let p = CropParams::default();
        let s = CropState::from_pools(0.0, 40.0, 20.0, 7.0, 10.0, p.sla);
        let mut w = season(120);
        for d in &mut w {
            d.rad = 0.0;
        }
        let traj = simulate(&p, &w, &s).unwrap();
        assert!(traj.iter().all(|x| x.twso == 7.0));
    }

    #[test]
    fn rejects_unordered_weather() {
        let p = CropParams::default();
        let s = CropState::from_pools(0.0, 40.0, 20.0, 0.0, 10.0, p.sla);
        let w = vec![day(10.0, 5.0), day(10.0, 5.0)];
        assert!(simulate(&p, &w, &s).is_err());
    }

    #[test]
    fn projection_restores_invariants() {
        let sla = 0.0022;
        let mut x = [2.5, 1.3, -4.0, -1.0, 10.0, -0.5];
        CropState::project(&mut x, sla);
        let s = CropState::from_slice(&x);
        s.validate().unwrap();
        assert_eq!(s.lai, sla * s.twlv);
        assert!((s.lai - 1.3).abs() < 1e-12);
        let mut y = [0.5, -1.0, 50.0, 1.0, 1.0, 1.0];
        CropState::project(&mut y, sla);
        assert_eq!(y[LAI], 0.0);
        assert_eq!(y[TWLV], 0.0);
    }

    proptest! {
        #[test]
        fn step_preserves_invariants(
            dvs in 0.0f64..2.0,
            twlv in 0.0f64..5000.0,
            twst in 0.0f64..8000.0,
            twso in 0.0f64..9000.0,
            twrt in 0.0f64..3000.0,
            tavg in -20.0f64..40.0,
            rad in 0.0f64..35.0,
        ) {
            let p = CropParams::default();
            let s = CropState::from_pools(dvs, twlv, twst, twso, twrt, p.sla);
            let n = step(&s, &day(tavg, rad), &p).unwrap();
            n.validate().unwrap();
            prop_assert_eq!(n.lai, p.sla * n.twlv);
            prop_assert_eq!(n.tagp(), n.twlv + n.twst + n.twso);
            prop_assert!(n.dvs >= s.dvs);
            prop_assert!(n.twso >= s.twso);
            prop_assert!(n.twst >= s.twst);
            prop_assert!(n.twrt >= s.twrt);
        }
    }
}
