use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric positive semi-definite covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

pub const SYMMETRY_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-10;

impl CovMatrix {
    /// Validates symmetry and semi-definiteness.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid("covariance must be square"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite covariance entry"));
        }
        let n = m.nrows();
        for i in 0..n {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        if n > 0 {
            let eig = m.clone().symmetric_eigen();
            if eig.eigenvalues.iter().any(|&l| l < -PSD_TOL) {
                return Err(Error::invalid("covariance is not positive semi-definite"));
            }
        }
        Ok(Self(m))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("diagonal variances must be finite and >= 0"));
        }
        Ok(Self(DMatrix::from_diagonal(&DVector::from_column_slice(
            diag,
        ))))
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Self::from_diagonal(&[v])
    }

    /// Caller guarantees symmetry and semi-definiteness.
    pub(crate) fn from_trusted(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `self + jitter * I`.
    pub fn jittered(&self, jitter: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        Self(m)
    }
}

/// K state vectors of equal dimension, stored as the columns of an n × K matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    states: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(states: DMatrix<f64>) -> Result<Self> {
        if states.ncols() < 2 {
            return Err(Error::invalid("ensemble needs at least 2 members"));
        }
        if states.nrows() == 0 {
            return Err(Error::invalid("ensemble state dimension is zero"));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite ensemble member"));
        }
        Ok(Self { states })
    }

    pub fn from_members(members: &[Vec<f64>]) -> Result<Self> {
        let n = members.first().map(Vec::len).unwrap_or(0);
        if members.iter().any(|m| m.len() != n) {
            return Err(Error::invalid("ensemble members differ in dimension"));
        }
        let flat: Vec<f64> = members.iter().flatten().copied().collect();
        Self::new(DMatrix::from_column_slice(n, members.len(), &flat))
    }

    /// Scalar-state ensemble.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(1, values.len(), values))
    }

    pub fn size(&self) -> usize {
        self.states.ncols()
    }

    pub fn dim(&self) -> usize {
        self.states.nrows()
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub(crate) fn states_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.states
    }

    pub fn member(&self, k: usize) -> &[f64] {
        let n = self.dim();
        &self.states.as_slice()[k * n..(k + 1) * n]
    }

    pub fn member_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.dim();
        &mut self.states.as_mut_slice()[k * n..(k + 1) * n]
    }

    pub fn members(&self) -> impl Iterator<Item = &[f64]> {
        self.states.as_slice().chunks_exact(self.dim())
    }

    /// Ensemble mean, summed in ascending member order.
    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for x in self.members() {
            for (a, b) in m.iter_mut().zip(x) {
                *a += b;
            }
        }
        m / self.size() as f64
    }

    /// Deviations of each member from the mean (n × K).
    pub fn anomalies(&self) -> DMatrix<f64> {
        let mean = self.mean();
        let mut a = self.states.clone();
        for mut col in a.column_iter_mut() {
            col -= &mean;
        }
        a
    }

    /// Per-component sample variance (diagonal of the covariance).
    pub fn variances(&self) -> DVector<f64> {
        let mean = self.mean();
        let mut v = DVector::zeros(self.dim());
        for x in self.members() {
            for i in 0..x.len() {
                let d = x[i] - mean[i];
                v[i] += d * d;
            }
        }
        v / (self.size() - 1) as f64
    }

    pub(crate) fn from_mean_anomalies(mean: &DVector<f64>, anomalies: &DMatrix<f64>) -> Self {
        let mut states = anomalies.clone();
        for mut col in states.column_iter_mut() {
            col += mean;
        }
        Self { states }
    }
}

/// Sample covariance with divisor K − 1 from anomalies.
pub(crate) fn covariance_from_anomalies(a: &DMatrix<f64>) -> CovMatrix {
    let k = a.ncols();
    let p = a * a.transpose() / (k - 1) as f64;
    CovMatrix::from_trusted((&p + p.transpose()) * 0.5)
}

/// Ensemble mean and sample covariance (divisor K − 1).
pub fn ensemble_mean_cov(ens: &Ensemble) -> Result<(DVector<f64>, CovMatrix)> {
    if ens.size() < 2 {
        return Err(Error::invalid("ensemble needs at least 2 members"));
    }
    let mean = ens.mean();
    let p = covariance_from_anomalies(&ens.anomalies());
    Ok((mean, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    // Ensemble mean and covariance oracles
    #[test]
    fn mean_and_cov_of_two_scalars() {
        let (m, p) = ensemble_mean_cov(&Ensemble::from_scalars(&[0.0, 2.0]).unwrap()).unwrap();
        assert_eq!(m[0], 1.0);
        assert_eq!(p.matrix()[(0, 0)], 2.0);
    }

    #[test]
    fn mean_and_cov_of_three_scalars() {
        let (m, p) = ensemble_mean_cov(&Ensemble::from_scalars(&[1.0, 2.0, 3.0]).unwrap()).unwrap();
        assert_eq!(m[0], 2.0);
        assert_eq!(p.matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn identical_members_have_zero_covariance() {
        let e = Ensemble::from_members(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let (_, p) = ensemble_mean_cov(&e).unwrap();
        assert!(p.matrix().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_member_rejected() {
        assert!(matches!(
            Ensemble::from_scalars(&[1.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn cov_matrix_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(CovMatrix::new(asym).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(CovMatrix::new(indefinite).is_err());
        let ok = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(CovMatrix::new(ok).is_ok());
    }

    proptest! {
        #[test]
        fn covariance_is_symmetric_psd(vals in proptest::collection::vec(-100.0f64..100.0, 12..40)) {
            let k = vals.len() / 3;
            let e = Ensemble::new(DMatrix::from_column_slice(3, k, &vals[..3 * k])).unwrap();
            let (_, p) = ensemble_mean_cov(&e).unwrap();
            prop_assert!(CovMatrix::new(p.matrix().clone()).is_ok());
            let v = e.variances();
            for i in 0..3 {
                prop_assert!((v[i] - p.matrix()[(i, i)]).abs() <= 1e-9 * (1.0 + v[i]));
            }
        }
    }
}
