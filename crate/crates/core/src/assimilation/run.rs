use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use super::ensemble::{covariance_from_anomalies, CovMatrix, Ensemble};
use super::update::{
    adaptive_weight, enkf_observe, esrf_observe, growth_rate_from_traces, inflate, innovation,
    kalman_gain, square_root_serial, weighted_analysis,
};
use super::var4d::{refine_initial_state, Background};
use super::{adjust_window, AssimConfig, Dynamics};
use crate::error::{Error, Result};
use crate::observation::{Observation, ObservationSeries};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// No assimilation: the free-running ensemble forecast.
    OpenLoop,
    /// Adaptive weight, variable window, variational refinement, square-root filter.
    Ww4ves,
    /// Perturbed-observation ensemble Kalman filter.
    Enkf,
    /// Fixed windows with variational refinement and square-root updates.
    Enkf4dvar,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::OpenLoop,
        Method::Ww4ves,
        Method::Enkf,
        Method::Enkf4dvar,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::OpenLoop => "open_loop",
            Method::Ww4ves => "ww4ves",
            Method::Enkf => "enkf",
            Method::Enkf4dvar => "enkf4dvar",
        }
    }

    pub fn assimilates(&self) -> bool {
        !matches!(self, Method::OpenLoop)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(alloc::format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum MeanUpdate {
    None,
    /// Weighted blend for the mean, square-root anomalies.
    Weighted,
    /// Gain update for the mean, square-root anomalies.
    SquareRoot,
    PerturbedObs,
}

#[derive(Debug, Clone, Copy)]
struct Scheme {
    refine: bool,
    adaptive_window: bool,
    update: MeanUpdate,
    quality_control: bool,
}

impl Scheme {
    fn of(method: Method) -> Self {
        match method {
            Method::OpenLoop => Scheme {
                refine: false,
                adaptive_window: false,
                update: MeanUpdate::None,
                quality_control: false,
            },
            Method::Ww4ves => Scheme {
                refine: true,
                adaptive_window: true,
                update: MeanUpdate::Weighted,
                quality_control: true,
            },
            Method::Enkf => Scheme {
                refine: false,
                adaptive_window: false,
                update: MeanUpdate::PerturbedObs,
                quality_control: false,
            },
            Method::Enkf4dvar => Scheme {
                refine: true,
                adaptive_window: false,
                update: MeanUpdate::SquareRoot,
                quality_control: false,
            },
        }
    }
}

/// One processed window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowRecord {
    pub start: usize,
    pub end: usize,
    /// Window length used for this window.
    pub tw: usize,
    /// Error growth rate at the window end, when an observation error reference exists.
    pub r: Option<f64>,
    pub alpha_raw: Vec<f64>,
    pub alpha: Vec<f64>,
    /// |δy| per assimilated observation.
    pub innovation_norms: Vec<f64>,
    /// Observed values and the forecast / analysis means mapped to them.
    pub observed: Vec<f64>,
    pub background: Vec<f64>,
    pub analysis: Vec<f64>,
    pub objective_before: Option<f64>,
    pub objective_after: Option<f64>,
    /// Times of observations rejected by quality control.
    pub rejected: Vec<usize>,
}

fn rms_diff(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.is_empty() {
        return None;
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Some(libm::sqrt(s / a.len() as f64))
}

impl WindowRecord {
    pub fn alpha_mean(&self) -> Option<f64> {
        if self.alpha.is_empty() {
            None
        } else {
            Some(self.alpha.iter().sum::<f64>() / self.alpha.len() as f64)
        }
    }

    pub fn background_rmse(&self) -> Option<f64> {
        rms_diff(&self.observed, &self.background)
    }

    pub fn analysis_rmse(&self) -> Option<f64> {
        rms_diff(&self.observed, &self.analysis)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub windows: Vec<WindowRecord>,
}

/// Result of an assimilation run.
#[derive(Debug, Clone, PartialEq)]
pub struct AssimRun {
    pub method: Method,
    /// Ensemble mean at every trajectory index (analysis where updated).
    pub means: Vec<DVector<f64>>,
    /// Per-component ensemble variance at every trajectory index.
    pub variances: Vec<DVector<f64>>,
    pub ensemble: Ensemble,
    pub diagnostics: Diagnostics,
}

impl AssimRun {
    /// Mean trajectory of one state component.
    pub fn component(&self, c: usize) -> Vec<f64> {
        self.means.iter().map(|m| m[c]).collect()
    }
}

/// `x ← M_t(x) + η`, then projected onto the valid state set.
pub fn propagate_member<D: Dynamics + ?Sized>(
    dynamics: &D,
    t: usize,
    x: &mut [f64],
    eta: &[f64],
) -> Result<()> {
    if eta.len() != x.len() {
        return Err(Error::invalid("noise dimension does not match the state"));
    }
    dynamics.advance(t, x)?;
    for (xi, e) in x.iter_mut().zip(eta) {
        *xi += e;
    }
    dynamics.project(x);
    Ok(())
}

/// Adaptive-weight, variable-window, variational + square-root assimilation.
pub fn ww4ves_run<D: Dynamics + ?Sized>(
    dynamics: &D,
    ens0: &Ensemble,
    obs: &ObservationSeries,
    cfg: &AssimConfig,
) -> Result<AssimRun> {
    run_method(Method::Ww4ves, dynamics, ens0, obs, cfg)
}

/// Comparison schemes: [`Method::Enkf`] or [`Method::Enkf4dvar`].
pub fn baseline_run<D: Dynamics + ?Sized>(
    method: Method,
    dynamics: &D,
    ens0: &Ensemble,
    obs: &ObservationSeries,
    cfg: &AssimConfig,
) -> Result<AssimRun> {
    if !matches!(method, Method::Enkf | Method::Enkf4dvar) {
        return Err(Error::invalid("baseline method must be enkf or enkf4dvar"));
    }
    run_method(method, dynamics, ens0, obs, cfg)
}

/// Free-running ensemble forecast (observations ignored).
pub fn open_loop_run<D: Dynamics + ?Sized>(
    dynamics: &D,
    ens0: &Ensemble,
    cfg: &AssimConfig,
) -> Result<AssimRun> {
    run_method(
        Method::OpenLoop,
        dynamics,
        ens0,
        &ObservationSeries::empty(),
        cfg,
    )
}

struct Runner<'a, D: Dynamics + ?Sized> {
    dynamics: &'a D,
    cfg: &'a AssimConfig,
    scheme: Scheme,
    ens: Ensemble,
    rngs: Vec<Rng>,
    noise_sd: Vec<f64>,
    means: Vec<DVector<f64>>,
    variances: Vec<DVector<f64>>,
}

impl<D: Dynamics + ?Sized> Runner<'_, D> {
    fn project_all(&mut self) {
        for k in 0..self.ens.size() {
            self.dynamics.project(self.ens.member_mut(k));
        }
    }

    fn record(&mut self, t: usize) {
        self.means[t] = self.ens.mean();
        self.variances[t] = self.ens.variances();
    }

    fn step_members(&mut self, t: usize) -> Result<()> {
        let n = self.ens.dim();
        let mut eta = alloc::vec![0.0; n];
        for k in 0..self.ens.size() {
            let rng = &mut self.rngs[k];
            for (e, sd) in eta.iter_mut().zip(&self.noise_sd) {
                *e = if *sd > 0.0 {
                    let z: f64 = StandardNormal.sample(rng);
                    sd * z
                } else {
                    0.0
                };
            }
            propagate_member(self.dynamics, t, self.ens.member_mut(k), &eta)?;
        }
        Ok(())
    }

    fn refine(
        &mut self,
        t: usize,
        window_obs: &[Observation],
        rec: &mut WindowRecord,
    ) -> Result<()> {
        let mean = self.ens.mean();
        let p = covariance_from_anomalies(&self.ens.anomalies());
        let bg = Background::new(mean.clone(), &p.jittered(self.cfg.jitter))?;
        let refined = refine_initial_state(self.dynamics, t, &bg, window_obs, &self.cfg.minimizer)?;
        let shift = &refined.x0 - &mean;
        for mut col in self.ens.states_mut().column_iter_mut() {
            col += &shift;
        }
        self.project_all();
        rec.objective_before = Some(refined.objective_before);
        rec.objective_after = Some(refined.objective_after);
        self.record(t);
        Ok(())
    }

    /// Quality control: drops components whose innovation exceeds
    /// `qc_sigma` forecast-plus-observation standard deviations.
    fn screen(&self, o: &Observation, rec: &mut WindowRecord) -> Result<Option<Observation>> {
        if !self.scheme.quality_control {
            return Ok(Some(o.clone()));
        }
        let mean = self.ens.mean();
        let var = self.ens.variances();
        let infl2 = self.cfg.inflation * self.cfg.inflation;
        let mut keep = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..o.dim() {
            let c = o.selector[j];
            if c >= mean.len() {
                return Err(Error::invalid(
                    "observation selector outside state dimension",
                ));
            }
            let sd = libm::sqrt(var[c] * infl2 + o.variances[j]);
            if libm::fabs(o.values[j] - mean[c]) <= self.cfg.qc_sigma * sd {
                keep.0.push(o.values[j]);
                keep.1.push(o.variances[j]);
                keep.2.push(c);
            }
        }
        if keep.0.len() < o.dim() {
            rec.rejected.push(o.time);
        }
        if keep.0.is_empty() {
            return Ok(None);
        }
        Observation::new(o.time, keep.0, keep.1, keep.2).map(Some)
    }

    fn observe(&mut self, o: &Observation, rec: &mut WindowRecord) -> Result<()> {
        if self.scheme.update == MeanUpdate::None {
            return Ok(());
        }
        let Some(o) = self.screen(o, rec)? else {
            return Ok(());
        };
        let n = self.ens.dim();
        let h = o.h(n)?;
        let xb = self.ens.mean();
        let dy = innovation(&o.y(), &h, &xb)?;
        let cfg = self.cfg;
        self.ens = match self.scheme.update {
            MeanUpdate::None => unreachable!(),
            MeanUpdate::Weighted => {
                let mut a = self.ens.anomalies();
                inflate(&mut a, cfg.inflation);
                let p = covariance_from_anomalies(&a);
                let r = CovMatrix::from_diagonal(&o.variances)?;
                let gain = kalman_gain(&p, &h, &r, cfg.jitter)?;
                let w = adaptive_weight(&r, &p, cfg.alpha_clamp)?;
                let xa = weighted_analysis(&xb, w.alpha, &gain, &dy)?;
                let mut scratch = xb.clone();
                square_root_serial(&mut scratch, &mut a, &o, cfg.jitter, false)?;
                rec.alpha_raw.push(w.raw);
                rec.alpha.push(w.alpha);
                Ensemble::from_mean_anomalies(&xa, &a)
            }
            MeanUpdate::SquareRoot => esrf_observe(&self.ens, &o, cfg.inflation, cfg.jitter)?,
            MeanUpdate::PerturbedObs => {
                enkf_observe(&self.ens, &o, cfg.inflation, cfg.jitter, &mut self.rngs)?
            }
        };
        self.project_all();
        let xa = self.ens.mean();
        rec.innovation_norms.push(dy.norm());
        for (j, &c) in o.selector.iter().enumerate() {
            rec.observed.push(o.values[j]);
            rec.background.push(xb[c]);
            rec.analysis.push(xa[c]);
        }
        Ok(())
    }
}

/// Runs `method` over the whole horizon of `dynamics`.
pub fn run_method<D: Dynamics + ?Sized>(
    method: Method,
    dynamics: &D,
    ens0: &Ensemble,
    obs: &ObservationSeries,
    cfg: &AssimConfig,
) -> Result<AssimRun> {
    let n = dynamics.dim();
    let horizon = dynamics.steps();
    cfg.validate(n)?;
    if ens0.dim() != n {
        return Err(Error::invalid(
            "ensemble dimension does not match the model",
        ));
    }
    if obs.last_time().is_some_and(|t| t > horizon) {
        return Err(Error::invalid("observation outside the simulated span"));
    }
    for o in obs.entries() {
        o.h(n)?;
    }
    let scheme = Scheme::of(method);
    let k = ens0.size();
    let mut runner = Runner {
        dynamics,
        cfg,
        scheme,
        ens: ens0.clone(),
        rngs: (0..k as u64).map(|i| rng::stream(cfg.seed, i)).collect(),
        noise_sd: cfg.model_noise.iter().map(|q| libm::sqrt(*q)).collect(),
        means: alloc::vec![DVector::zeros(n); horizon + 1],
        variances: alloc::vec![DVector::zeros(n); horizon + 1],
    };
    runner.project_all();
    runner.record(0);

    let mut diagnostics = Diagnostics::default();
    let mut tw = cfg.tw0;
    let mut t = 0;
    while t < horizon {
        let end = (t + tw).min(horizon);
        let window_obs = if t == 0 {
            obs.between(0, end)
        } else {
            obs.between(t + 1, end)
        };
        let mut rec = WindowRecord {
            start: t,
            end,
            tw,
            ..Default::default()
        };

        if scheme.refine && !window_obs.is_empty() {
            runner.refine(t, window_obs, &mut rec)?;
        }
        if t == 0 {
            if let Some(o) = obs.at(0) {
                runner.observe(o, &mut rec)?;
                runner.record(0);
            }
        }
        for s in t..end {
            runner.step_members(s)?;
            if let Some(o) = obs.at(s + 1) {
                runner.observe(o, &mut rec)?;
            }
            runner.record(s + 1);
        }

        if let Some(tr_r) = reference_obs_trace(obs, window_obs, end) {
            let tr_p = runner.variances[end].iter().sum::<f64>();
            let r = growth_rate_from_traces(tr_p, tr_r)?;
            rec.r = Some(r);
            if scheme.adaptive_window && r > 0.0 {
                tw = adjust_window(tw, r, cfg.r0, cfg.beta, cfg.tw_min, cfg.tw_max)?;
            }
        }
        diagnostics.windows.push(rec);
        t = end;
    }
    if horizon == 0 {
        diagnostics.windows.push(WindowRecord {
            tw,
            ..Default::default()
        });
    }

    Ok(AssimRun {
        method,
        means: runner.means,
        variances: runner.variances,
        ensemble: runner.ens,
        diagnostics,
    })
}

/// tr(R) used for the error growth rate at a window end: the mean over the
/// window's observations, else the next observation, else the previous one.
fn reference_obs_trace(
    obs: &ObservationSeries,
    window_obs: &[Observation],
    end: usize,
) -> Option<f64> {
    if !window_obs.is_empty() {
        return Some(
            window_obs.iter().map(Observation::trace_r).sum::<f64>() / window_obs.len() as f64,
        );
    }
    let entries = obs.entries();
    let next = entries.partition_point(|o| o.time <= end);
    entries
        .get(next)
        .or_else(|| next.checked_sub(1).and_then(|i| entries.get(i)))
        .map(Observation::trace_r)
}
