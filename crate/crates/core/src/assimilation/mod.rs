//! Ensemble and variational assimilation.
//!
//! The main entry point is [`ww4ves_run`]: windowed assimilation that refines
//! the window's initial mean variationally, propagates a stochastic ensemble,
//! applies a square-root update with an adaptive background weight at each
//! observation, and resizes the next window from the ratio of background to
//! observation error. [`baseline_run`] provides the perturbed-observation
//! EnKF and a fixed-window ensemble/variational hybrid for comparison.

mod ensemble;
mod run;
mod update;
mod var4d;

pub use ensemble::{ensemble_mean_cov, CovMatrix, Ensemble};
pub use run::{
    baseline_run, open_loop_run, propagate_member, run_method, ww4ves_run, AssimRun, Diagnostics,
    Method, WindowRecord,
};
pub use update::{
    adaptive_weight, adjust_window, analysis_update, enkf_observe, error_growth_rate, esrf_observe,
    innovation, kalman_gain, weighted_analysis, AdaptiveWeight,
};
pub use var4d::{
    gauss_newton, gradient_descent, objective_4dvar, observation_cost, refine_initial_state,
    Background, Descent, MinimizerSettings, Minimum, Refinement,
};

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Discrete-time state transition `x_t -> x_{t+1}`.
pub trait Dynamics {
    fn dim(&self) -> usize;

    /// Number of transitions available (trajectory length − 1).
    fn steps(&self) -> usize;

    /// Advances `x` from index `t` to `t + 1` in place.
    fn advance(&self, t: usize, x: &mut [f64]) -> Result<()>;

    /// Maps an arbitrary vector back onto the valid state set.
    fn project(&self, _x: &mut [f64]) {}
}

/// Affine model `x' = A x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub steps: usize,
}

impl LinearDynamics {
    pub fn scalar(a: f64, c: f64, steps: usize) -> Self {
        Self {
            a: DMatrix::from_element(1, 1, a),
            c: DVector::from_element(1, c),
            steps,
        }
    }

    pub fn identity(dim: usize, steps: usize) -> Self {
        Self {
            a: DMatrix::identity(dim, dim),
            c: DVector::zeros(dim),
            steps,
        }
    }
}

impl Dynamics for LinearDynamics {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn steps(&self) -> usize {
        self.steps
    }

    fn advance(&self, t: usize, x: &mut [f64]) -> Result<()> {
        if t >= self.steps {
            return Err(Error::invalid("time index beyond model horizon"));
        }
        let next = &self.a * DVector::from_column_slice(x) + &self.c;
        x.copy_from_slice(next.as_slice());
        Ok(())
    }
}

/// Assimilation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct AssimConfig {
    /// Ensemble size K.
    pub ensemble_size: usize,
    /// Diagonal of the model-noise covariance Q.
    pub model_noise: Vec<f64>,
    /// Initial window length, days.
    pub tw0: usize,
    /// Error-growth threshold.
    pub r0: f64,
    /// Window adjustment exponent.
    pub beta: f64,
    pub tw_min: usize,
    pub tw_max: usize,
    /// Multiplicative anomaly inflation applied before each update.
    pub inflation: f64,
    /// Diagonal regularization of innovation and background covariances.
    pub jitter: f64,
    pub alpha_clamp: (f64, f64),
    /// Observations farther than this many innovation standard deviations
    /// from the forecast are rejected (adaptive-weight scheme only).
    pub qc_sigma: f64,
    pub minimizer: MinimizerSettings,
    pub seed: u64,
}

impl AssimConfig {
    /// Defaults for the crop state vector over a season of `season_len` days:
    /// LAI model-noise variance 0.01 per day, all other components noise free.
    pub fn crop_default(season_len: usize) -> Self {
        let mut q = alloc::vec![0.0; crate::crop_model::STATE_DIM];
        q[crate::crop_model::LAI] = 0.01;
        Self {
            ensemble_size: 50,
            model_noise: q,
            tw0: 10,
            r0: 1.0,
            beta: 0.5,
            tw_min: 1,
            tw_max: season_len.max(10),
            inflation: 1.0,
            jitter: 1e-9,
            alpha_clamp: (0.0, 1.0),
            qc_sigma: 3.0,
            minimizer: MinimizerSettings::default(),
            seed: 0,
        }
    }

    /// Generic defaults for an `dim`-dimensional state with noise variance `q`.
    pub fn generic(dim: usize, q: f64, season_len: usize) -> Self {
        Self {
            model_noise: alloc::vec![q; dim],
            ..Self::crop_default(season_len)
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.ensemble_size < 2 {
            return Err(Error::invalid("ensemble size must be >= 2"));
        }
        if self.model_noise.len() != dim {
            return Err(Error::invalid(
                "model-noise diagonal must match the state dimension",
            ));
        }
        if self
            .model_noise
            .iter()
            .any(|q| !(q.is_finite() && *q >= 0.0))
        {
            return Err(Error::invalid(
                "model-noise variances must be finite and >= 0",
            ));
        }
        if !(1 <= self.tw_min && self.tw_min <= self.tw0 && self.tw0 <= self.tw_max) {
            return Err(Error::invalid(
                "window bounds need 1 <= tw_min <= tw0 <= tw_max",
            ));
        }
        if !(self.r0 > 0.0) || !self.r0.is_finite() {
            return Err(Error::invalid("r0 must be > 0"));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::invalid("beta must be >= 0"));
        }
        if !(self.inflation >= 1.0) || !self.inflation.is_finite() {
            return Err(Error::invalid("inflation must be >= 1"));
        }
        if !(self.jitter >= 0.0) || !self.jitter.is_finite() {
            return Err(Error::invalid("jitter must be >= 0"));
        }
        let (lo, hi) = self.alpha_clamp;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("alpha clamp needs lower <= upper"));
        }
        if !(self.qc_sigma > 0.0) {
            return Err(Error::invalid("qc_sigma must be > 0"));
        }
        Ok(())
    }
}
