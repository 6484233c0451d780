use alloc::vec::Vec;

use super::{simulate, CropParams, CropState, ParamName, WeatherDay, LAI};
use crate::error::{Error, Result};
use crate::observation::{Observation, ObservationSeries};
use crate::tuning;

/// Guard on the observed-LAI denominator of the calibration cost.
pub const LAI_COST_EPS: f64 = 0.01;

/// Calibration box over a subset of the scalar parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpace {
    entries: Vec<(ParamName, f64, f64)>,
}

impl ParamSpace {
    pub fn new(entries: Vec<(ParamName, f64, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::invalid("parameter space is empty"));
        }
        for (i, (name, lo, hi)) in entries.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(alloc::format!(
                    "bounds for `{name}` need lower < upper"
                )));
            }
            if entries[..i].iter().any(|e| e.0 == *name) {
                return Err(Error::invalid(alloc::format!(
                    "parameter `{name}` listed twice"
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Box of ±`fraction` around each named parameter of `center`.
    pub fn relative_box(center: &CropParams, names: &[ParamName], fraction: f64) -> Result<Self> {
        Self::new(
            names
                .iter()
                .map(|&n| {
                    let v = center.get(n);
                    let d = (v * fraction).abs();
                    (n, v - d, v + d)
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[(ParamName, f64, f64)] {
        &self.entries
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.entries.iter().map(|e| (e.1, e.2)).collect()
    }

    pub fn apply(&self, base: &CropParams, point: &[f64]) -> CropParams {
        let mut p = base.clone();
        for ((name, _, _), &v) in self.entries.iter().zip(point) {
            p.set(*name, v);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub params: CropParams,
    pub cost: f64,
    pub search: tuning::SearchOutcome,
}

/// Mean squared relative LAI error of a trajectory against `obs`.
pub fn lai_cost(trajectory: &[CropState], obs: &[Observation]) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::invalid("empty observation series"));
    }
    let mut sum = 0.0;
    for o in obs {
        let sim = trajectory
            .get(o.time)
            .ok_or_else(|| Error::invalid("observation time outside the weather span"))?;
        let observed = lai_value(o)?;
        let rel = (sim.lai - observed) / observed.max(LAI_COST_EPS);
        sum += rel * rel;
    }
    Ok(sum / obs.len() as f64)
}

fn lai_value(o: &Observation) -> Result<f64> {
    match o.selector.iter().position(|&c| c == LAI) {
        Some(j) => Ok(o.values[j]),
        None => Err(Error::invalid("calibration observations must include LAI")),
    }
}

/// Calibrates `space` against LAI observations with `budget` random trials.
pub fn calibrate(
    space: &ParamSpace,
    base: &CropParams,
    weather: &[WeatherDay],
    initial: &CropState,
    observations: &ObservationSeries,
    budget: usize,
    seed: u64,
) -> Result<Calibration> {
    if budget == 0 {
        return Err(Error::invalid("calibration budget must be >= 1"));
    }
    let candidates = tuning::sample_uniform(&space.bounds(), budget, seed)?;
    calibrate_candidates(space, base, weather, initial, observations, candidates)
}

/// Same as [`calibrate`] over an explicit candidate list.
pub fn calibrate_candidates(
    space: &ParamSpace,
    base: &CropParams,
    weather: &[WeatherDay],
    initial: &CropState,
    observations: &ObservationSeries,
    candidates: Vec<Vec<f64>>,
) -> Result<Calibration> {
    let obs = observations.entries();
    if obs.is_empty() {
        return Err(Error::invalid("empty observation series"));
    }
    if obs.iter().any(|o| o.time > weather.len()) {
        return Err(Error::invalid("observation time outside the weather span"));
    }
    if candidates.iter().any(|c| c.len() != space.entries().len()) {
        return Err(Error::invalid(
            "candidate dimension does not match parameter space",
        ));
    }
    let rung_len = obs.len().div_ceil(3).max(1);
    let rung_obs = &obs[..rung_len];
    let rung_days = rung_obs.last().map(|o| o.time).unwrap_or(0).max(1);

    let run = |point: &[f64], days: usize| -> Result<Vec<CropState>> {
        let p = space.apply(base, point);
        p.validate()?;
        simulate(&p, &weather[..days.min(weather.len())], initial)
    };
    let search = tuning::halving_search(
        candidates,
        |pt| lai_cost(&run(pt, rung_days)?, rung_obs),
        |pt| lai_cost(&run(pt, weather.len())?, obs),
    )?;
    Ok(Calibration {
        params: space.apply(base, &search.best),
        cost: search.best_cost,
        search,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use chrono::NaiveDate;

    fn weather() -> Vec<WeatherDay> {
        let start = NaiveDate::from_ymd_opt(2023, 3, 1).unwrap();
        (0..150)
            .map(|i| WeatherDay::new(start + chrono::Days::new(i), 6.0 + 0.08 * i as f64, 9.0))
            .collect()
    }

    fn initial(p: &CropParams) -> CropState {
        CropState::from_pools(0.0, 30.0, 15.0, 0.0, 8.0, p.sla)
    }

    fn observe(p: &CropParams, times: &[usize]) -> ObservationSeries {
        let traj = simulate(p, &weather(), &initial(p)).unwrap();
        ObservationSeries::new(
            times
                .iter()
                .map(|&t| Observation::scalar(t, LAI, traj[t].lai, 0.09).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn true_parameters_win_when_sampled() {
        let truth = CropParams::default();
        let space =
            ParamSpace::relative_box(&truth, &[ParamName::Rue, ParamName::Kext], 0.2).unwrap();
        let obs = observe(&truth, &[20, 40, 60, 80, 100, 120]);
        let mut cands = tuning::sample_uniform(&space.bounds(), 30, 2).unwrap();
        cands.insert(10, vec![truth.rue, truth.kext]);
        let cal = calibrate_candidates(&space, &truth, &weather(), &initial(&truth), &obs, cands)
            .unwrap();
        assert_eq!(cal.cost, 0.0);
        for t in cal.search.trials.iter().filter_map(|t| t.full_cost) {
            assert!(cal.cost <= t);
        }
    }

    #[test]
    fn budget_one_returns_the_sample() {
        let truth = CropParams::default();
        let space = ParamSpace::relative_box(&truth, &[ParamName::Rue], 0.2).unwrap();
        let obs = observe(&truth, &[30, 60]);
        let cal = calibrate(&space, &truth, &weather(), &initial(&truth), &obs, 1, 9).unwrap();
        let only = tuning::sample_uniform(&space.bounds(), 1, 9).unwrap();
        assert_eq!(cal.params.rue, only[0][0]);
    }

    #[test]
    fn recovers_rue_from_noiseless_lai() {
        let mut truth = CropParams::default();
        truth.rue = 2.8;
        truth.kext = 0.65;
        let nominal = CropParams::default();
        let space =
            ParamSpace::relative_box(&nominal, &[ParamName::Rue, ParamName::Kext], 0.2).unwrap();
        let obs = observe(&truth, &[15, 30, 45, 60, 75, 90, 105]);
        let cal = calibrate(
            &space,
            &nominal,
            &weather(),
            &initial(&nominal),
            &obs,
            500,
            7,
        )
        .unwrap();
        assert!(
            (cal.params.rue - truth.rue).abs() < 0.1 * truth.rue,
            "rue {}",
            cal.params.rue
        );
    }

    #[test]
    fn empty_observations_rejected() {
        let p = CropParams::default();
        let space = ParamSpace::relative_box(&p, &[ParamName::Rue], 0.2).unwrap();
        let err = calibrate(
            &space,
            &p,
            &weather(),
            &initial(&p),
            &ObservationSeries::empty(),
            5,
            0,
        );
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn deterministic_and_monotone_in_budget() {
        let truth = CropParams::default();
        let space =
            ParamSpace::relative_box(&truth, &[ParamName::Rue, ParamName::Tsum1], 0.2).unwrap();
        let obs = observe(&truth, &[20, 50, 80, 110]);
        let run = |b| calibrate(&space, &truth, &weather(), &initial(&truth), &obs, b, 4).unwrap();
        assert_eq!(run(12), run(12));
        for b in [1, 3, 8, 20] {
            assert!(run(2 * b).cost <= run(b).cost);
        }
    }

    #[test]
    fn space_rejects_inverted_bounds() {
        assert!(ParamSpace::new(vec![(ParamName::Rue, 3.0, 2.0)]).is_err());
        assert!(
            ParamSpace::new(vec![(ParamName::Rue, 2.0, 3.0), (ParamName::Rue, 2.0, 3.0)]).is_err()
        );
    }
}
