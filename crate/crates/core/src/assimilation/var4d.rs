//! Variational cost over a window and its minimization.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::ensemble::CovMatrix;
use super::Dynamics;
use crate::error::{Error, Result};
use crate::observation::Observation;

/// Background state with a factorized error covariance.
#[derive(Debug, Clone)]
pub struct Background {
    pub xb: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl Background {
    pub fn new(xb: DVector<f64>, b: &CovMatrix) -> Result<Self> {
        if b.dim() != xb.len() {
            return Err(Error::invalid("background covariance dimension mismatch"));
        }
        let chol = b
            .matrix()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("background covariance is singular"))?;
        Ok(Self { xb, chol })
    }

    /// Lower Cholesky factor L with B = LLᵀ.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// ½ (x0 − xb)ᵀ B⁻¹ (x0 − xb).
    pub fn cost(&self, x0: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x0) - &self.xb;
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&d)
            .expect("Cholesky factor has a positive diagonal");
        0.5 * z.norm_squared()
    }
}

/// ½ Σᵢ (yᵢ − Hᵢxᵢ)ᵀ Rᵢ⁻¹ (yᵢ − Hᵢxᵢ) with xᵢ propagated deterministically
/// from `x0` at trajectory index `t0`.
pub fn observation_cost<D: Dynamics + ?Sized>(
    dynamics: &D,
    t0: usize,
    x0: &[f64],
    obs: &[Observation],
) -> Result<f64> {
    let mut res = Vec::new();
    observation_residuals(dynamics, t0, x0, obs, &mut res)?;
    Ok(0.5 * res.iter().map(|r| r * r).sum::<f64>())
}

/// Whitened observation residuals `(yᵢ − Hᵢxᵢ)/σᵢ`, appended to `out`.
fn observation_residuals<D: Dynamics + ?Sized>(
    dynamics: &D,
    t0: usize,
    x0: &[f64],
    obs: &[Observation],
    out: &mut Vec<f64>,
) -> Result<()> {
    let mut x = x0.to_vec();
    dynamics.project(&mut x);
    let mut t = t0;
    for o in obs {
        if o.time < t {
            return Err(Error::invalid(
                "observations must be ordered and not precede the window start",
            ));
        }
        while t < o.time {
            dynamics.advance(t, &mut x)?;
            dynamics.project(&mut x);
            t += 1;
        }
        for j in 0..o.dim() {
            let c =
                *o.selector.get(j).filter(|&&c| c < x.len()).ok_or_else(|| {
                    Error::invalid("observation selector outside state dimension")
                })?;
            out.push((o.values[j] - x[c]) / libm::sqrt(o.variances[j]));
        }
    }
    Ok(())
}

/// Window objective J(x0): background term plus observation misfit.
pub fn objective_4dvar<D: Dynamics + ?Sized>(
    dynamics: &D,
    t0: usize,
    x0: &[f64],
    xb: &[f64],
    b: &CovMatrix,
    obs: &[Observation],
) -> Result<f64> {
    let bg = Background::new(DVector::from_column_slice(xb), b)?;
    Ok(bg.cost(x0) + observation_cost(dynamics, t0, x0, obs)?)
}

/// Descent direction used by the window minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Descent {
    /// Steepest descent on the finite-difference gradient.
    Gradient,
    /// Gauss-Newton on the whitened residuals with a finite-difference Jacobian.
    GaussNewton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizerSettings {
    pub descent: Descent,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Central-difference step in control space.
    pub fd_step: f64,
}

impl Default for MinimizerSettings {
    fn default() -> Self {
        Self {
            descent: Descent::GaussNewton,
            max_iter: 200,
            grad_tol: 1e-6,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
}

/// Gradient descent with central finite-difference gradients and step
/// halving on non-decrease. Accepted steps double the trial step.
pub fn gradient_descent<F>(mut f: F, start: &[f64], settings: &MinimizerSettings) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = start.len();
    let mut x = start.to_vec();
    let mut fx = f(&x)?;
    let initial_value = fx;
    let mut step = 1.0;
    let mut grad = vec![0.0; n];
    let mut probe = x.clone();
    let mut iterations = 0;
    'outer: while iterations < settings.max_iter {
        iterations += 1;
        for i in 0..n {
            let h = settings.fd_step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe)?;
            probe[i] = x[i] - h;
            let down = f(&probe)?;
            probe[i] = x[i];
            grad[i] = (up - down) / (2.0 * h);
        }
        let gnorm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
        if !gnorm.is_finite() {
            return Err(Error::numerical("non-finite objective gradient"));
        }
        if gnorm < settings.grad_tol {
            break;
        }
        loop {
            for i in 0..n {
                probe[i] = x[i] - step * grad[i];
            }
            let ft = f(&probe)?;
            if ft < fx {
                x.copy_from_slice(&probe);
                fx = ft;
                step *= 2.0;
                break;
            }
            step *= 0.5;
            if step * gnorm < 1e-14 * (1.0 + libm::sqrt(x.iter().map(|v| v * v).sum::<f64>())) {
                probe.copy_from_slice(&x);
                break 'outer;
            }
        }
    }
    Ok(Minimum {
        x,
        value: fx,
        initial_value,
        iterations,
    })
}

/// Gauss-Newton on `J(x) = ½|res(x)|²` with a central-difference Jacobian
/// and step halving on non-decrease. Stops when `|Jᵀres| < grad_tol`.
pub fn gauss_newton<F>(
    mut residuals: F,
    start: &[f64],
    settings: &MinimizerSettings,
) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut Vec<f64>) -> Result<()>,
{
    let n = start.len();
    let half_sq = |r: &[f64]| 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    let mut x = start.to_vec();
    let mut res = Vec::new();
    residuals(&x, &mut res)?;
    let mut fx = half_sq(&res);
    let initial_value = fx;
    let m = res.len();
    let mut jac = DMatrix::zeros(m, n);
    let (mut up, mut down, mut trial_res) = (Vec::new(), Vec::new(), Vec::new());
    let mut probe = x.clone();
    let mut iterations = 0;
    while iterations < settings.max_iter {
        iterations += 1;
        for i in 0..n {
            let h = settings.fd_step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            residuals(&probe, &mut up)?;
            probe[i] = x[i] - h;
            residuals(&probe, &mut down)?;
            probe[i] = x[i];
            for k in 0..m {
                jac[(k, i)] = (up[k] - down[k]) / (2.0 * h);
            }
        }
        let r = DVector::from_column_slice(&res);
        let grad = jac.transpose() * &r;
        let gnorm = grad.norm();
        if !gnorm.is_finite() {
            return Err(Error::numerical("non-finite objective gradient"));
        }
        if gnorm < settings.grad_tol {
            break;
        }
        let jtj = jac.transpose() * &jac;
        let dir = match jtj.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => jtj
                .lu()
                .solve(&grad)
                .ok_or_else(|| Error::numerical("singular Gauss-Newton system"))?,
        };
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-10 {
            for i in 0..n {
                probe[i] = x[i] - step * dir[i];
            }
            residuals(&probe, &mut trial_res)?;
            let ft = half_sq(&trial_res);
            if ft < fx {
                x.copy_from_slice(&probe);
                core::mem::swap(&mut res, &mut trial_res);
                fx = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        probe.copy_from_slice(&x);
        if !accepted {
            break;
        }
    }
    Ok(Minimum {
        x,
        value: fx,
        initial_value,
        iterations,
    })
}

/// Refined initial state of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub x0: DVector<f64>,
    pub objective_before: f64,
    pub objective_after: f64,
    pub iterations: usize,
}

/// Minimizes J over the window in the control variable `v` with
/// `x0 = xb + L v` (B = LLᵀ), where the background term equals ½|v|².
pub fn refine_initial_state<D: Dynamics + ?Sized>(
    dynamics: &D,
    t0: usize,
    background: &Background,
    obs: &[Observation],
    settings: &MinimizerSettings,
) -> Result<Refinement> {
    let n = background.xb.len();
    let l = background.factor();
    let mut x = vec![0.0; n];
    let to_state = |v: &[f64], x: &mut [f64]| {
        for i in 0..n {
            let mut s = background.xb[i];
            for j in 0..=i {
                s += l[(i, j)] * v[j];
            }
            x[i] = s;
        }
    };
    let start = vec![0.0; n];
    let min = match settings.descent {
        Descent::Gradient => gradient_descent(
            |v| {
                to_state(v, &mut x);
                let bg = 0.5 * v.iter().map(|a| a * a).sum::<f64>();
                Ok(bg + observation_cost(dynamics, t0, &x, obs)?)
            },
            &start,
            settings,
        )?,
        Descent::GaussNewton => gauss_newton(
            |v, out| {
                out.clear();
                out.extend_from_slice(v);
                to_state(v, &mut x);
                observation_residuals(dynamics, t0, &x, obs, out)
            },
            &start,
            settings,
        )?,
    };
    let mut x0 = vec![0.0; n];
    to_state(&min.x, &mut x0);
    Ok(Refinement {
        x0: DVector::from_vec(x0),
        objective_before: min.initial_value,
        objective_after: min.value,
        iterations: min.iterations,
    })
}
