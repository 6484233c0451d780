//! Observation-update building blocks: innovation, gain, analysis, adaptive
//! weight, error growth rate, window adjustment and the two ensemble
//! observation updates (deterministic square root and perturbed observations).

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::ensemble::{covariance_from_anomalies, CovMatrix, Ensemble};
use crate::error::{Error, Result};
use crate::observation::Observation;
use crate::rng::Rng;

/// δy = y − Hx.
pub fn innovation(y: &DVector<f64>, h: &DMatrix<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    if h.ncols() != x.len() || h.nrows() != y.len() {
        return Err(Error::invalid("innovation dimensions do not conform"));
    }
    Ok(y - h * x)
}

/// K = PHᵀ(HPHᵀ + R + jitter·I)⁻¹.
pub fn kalman_gain(
    p: &CovMatrix,
    h: &DMatrix<f64>,
    r: &CovMatrix,
    jitter: f64,
) -> Result<DMatrix<f64>> {
    let p = p.matrix();
    if h.ncols() != p.nrows() || h.nrows() != r.dim() {
        return Err(Error::invalid("gain dimensions do not conform"));
    }
    let hp = h * p;
    let mut s = &hp * h.transpose() + r.matrix();
    for i in 0..s.nrows() {
        s[(i, i)] += jitter;
    }
    // S Kᵀ = H P  (P symmetric)
    let kt = match s.clone().cholesky() {
        Some(ch) => ch.solve(&hp),
        None => s
            .lu()
            .solve(&hp)
            .ok_or_else(|| Error::numerical("innovation covariance is singular"))?,
    };
    if kt.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite Kalman gain"));
    }
    Ok(kt.transpose())
}

/// xa = xb + K δy.
pub fn analysis_update(
    xb: &DVector<f64>,
    gain: &DMatrix<f64>,
    dy: &DVector<f64>,
) -> Result<DVector<f64>> {
    if gain.nrows() != xb.len() || gain.ncols() != dy.len() {
        return Err(Error::invalid("analysis dimensions do not conform"));
    }
    Ok(xb + gain * dy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveWeight {
    /// 1 / (tr R + tr P) before clamping.
    pub raw: f64,
    pub alpha: f64,
}

/// α = 1 / (tr R + tr P), clamped into `clamp`.
pub fn adaptive_weight(r: &CovMatrix, p: &CovMatrix, clamp: (f64, f64)) -> Result<AdaptiveWeight> {
    let total = r.trace() + p.trace();
    if !(total > 0.0) {
        return Err(Error::invalid("tr(R) + tr(P) must be > 0"));
    }
    let raw = 1.0 / total;
    Ok(AdaptiveWeight {
        raw,
        alpha: raw.clamp(clamp.0, clamp.1),
    })
}

/// xa = (1 − α) xb + α K δy.
pub fn weighted_analysis(
    xb: &DVector<f64>,
    alpha: f64,
    gain: &DMatrix<f64>,
    dy: &DVector<f64>,
) -> Result<DVector<f64>> {
    if gain.nrows() != xb.len() || gain.ncols() != dy.len() {
        return Err(Error::invalid("analysis dimensions do not conform"));
    }
    Ok(xb * (1.0 - alpha) + (gain * dy) * alpha)
}

/// r = tr(P) / tr(R).
pub fn error_growth_rate(p: &CovMatrix, r: &CovMatrix) -> Result<f64> {
    growth_rate_from_traces(p.trace(), r.trace())
}

pub(crate) fn growth_rate_from_traces(tr_p: f64, tr_r: f64) -> Result<f64> {
    if !(tr_r > 0.0) {
        return Err(Error::invalid("tr(R) must be > 0"));
    }
    Ok(tr_p / tr_r)
}

/// Next window length `round(tw · (r / r0)^β)` clamped to `[tw_min, tw_max]`.
pub fn adjust_window(
    tw: usize,
    r: f64,
    r0: f64,
    beta: f64,
    tw_min: usize,
    tw_max: usize,
) -> Result<usize> {
    if tw < 1 {
        return Err(Error::invalid("window length must be >= 1"));
    }
    if !(r0 > 0.0) {
        return Err(Error::invalid("r0 must be > 0"));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::invalid("error growth rate must be finite and > 0"));
    }
    if tw_min < 1 || tw_min > tw_max {
        return Err(Error::invalid("window bounds need 1 <= tw_min <= tw_max"));
    }
    let next = libm::round(tw as f64 * libm::pow(r / r0, beta));
    let clamped = if next.is_nan() {
        tw as f64
    } else {
        next.clamp(tw_min as f64, tw_max as f64)
    };
    Ok(clamped as usize)
}

/// Multiplies anomalies by `inflation` in place.
pub(crate) fn inflate(anomalies: &mut DMatrix<f64>, inflation: f64) {
    if inflation != 1.0 {
        *anomalies *= inflation;
    }
}

/// Serial scalar square-root update of mean and anomalies.
///
/// For each observed component the gain is `k = PHᵀ/(HPHᵀ + r)` and the
/// anomalies are reduced by `γ k (HA)` with `γ = 1 / (1 + sqrt(r / (HPHᵀ + r)))`,
/// which reproduces `(I − kH)P` exactly for the sample covariance.
pub(crate) fn square_root_serial(
    mean: &mut DVector<f64>,
    anomalies: &mut DMatrix<f64>,
    obs: &Observation,
    jitter: f64,
    update_mean: bool,
) -> Result<()> {
    let n = anomalies.nrows();
    let km1 = (anomalies.ncols() - 1) as f64;
    for j in 0..obs.dim() {
        let c = obs.selector[j];
        if c >= n {
            return Err(Error::invalid(
                "observation selector outside state dimension",
            ));
        }
        let ha = anomalies.row(c).into_owned();
        let hph = ha.dot(&ha) / km1;
        let r = obs.variances[j] + jitter;
        let denom = hph + r;
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(Error::numerical("innovation variance is singular"));
        }
        let pht = &*anomalies * ha.transpose() / km1;
        let gain = pht / denom;
        if update_mean {
            let dy = obs.values[j] - mean[c];
            *mean += &gain * dy;
        }
        let gamma = 1.0 / (1.0 + libm::sqrt(r / denom));
        *anomalies -= (&gain * gamma) * ha;
    }
    Ok(())
}

/// Deterministic ensemble square-root observation update.
pub fn esrf_observe(
    ens: &Ensemble,
    obs: &Observation,
    inflation: f64,
    jitter: f64,
) -> Result<Ensemble> {
    let mut mean = ens.mean();
    let mut a = ens.anomalies();
    inflate(&mut a, inflation);
    square_root_serial(&mut mean, &mut a, obs, jitter, true)?;
    Ok(Ensemble::from_mean_anomalies(&mean, &a))
}

/// Perturbed-observation ensemble Kalman update; member `k` draws its
/// observation perturbation from `rngs[k]`.
pub fn enkf_observe(
    ens: &Ensemble,
    obs: &Observation,
    inflation: f64,
    jitter: f64,
    rngs: &mut [Rng],
) -> Result<Ensemble> {
    if rngs.len() != ens.size() {
        return Err(Error::invalid("one random stream per member required"));
    }
    let n = ens.dim();
    let mean = ens.mean();
    let mut a = ens.anomalies();
    inflate(&mut a, inflation);
    let p = covariance_from_anomalies(&a);
    let h = obs.h(n)?;
    let r = CovMatrix::from_diagonal(&obs.variances)?;
    let gain = kalman_gain(&p, &h, &r, jitter)?;
    let y = obs.y();
    let mut out = Ensemble::from_mean_anomalies(&mean, &a);
    let sd: alloc::vec::Vec<f64> = obs.variances.iter().map(|v| libm::sqrt(*v)).collect();
    for (k, rng) in rngs.iter_mut().enumerate() {
        let x = DVector::from_column_slice(out.member(k));
        let mut yk = y.clone();
        for (j, s) in sd.iter().enumerate() {
            let z: f64 = StandardNormal.sample(rng);
            yk[j] += s * z;
        }
        let xa = &x + &gain * (yk - &h * &x);
        out.member_mut(k).copy_from_slice(xa.as_slice());
    }
    Ok(out)
}
