//! Time-indexed observations with diagonal error covariance and a
//! component-selector observation operator.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One observation time: `values[j]` observes state component
/// `selector[j]` with error variance `variances[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Trajectory index the observation refers to (0 = initial state).
    pub time: usize,
    pub values: Vec<f64>,
    pub variances: Vec<f64>,
    pub selector: Vec<usize>,
}

impl Observation {
    pub fn new(
        time: usize,
        values: Vec<f64>,
        variances: Vec<f64>,
        selector: Vec<usize>,
    ) -> Result<Self> {
        if values.is_empty() || values.len() != variances.len() || values.len() != selector.len() {
            return Err(Error::invalid(
                "observation values, variances and selector must have equal non-zero length",
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite observation value"));
        }
        if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(
                "observation error variances must be finite and > 0",
            ));
        }
        Ok(Self {
            time,
            values,
            variances,
            selector,
        })
    }

    /// Scalar observation of a single state component.
    pub fn scalar(time: usize, component: usize, value: f64, variance: f64) -> Result<Self> {
        Self::new(
            time,
            alloc::vec![value],
            alloc::vec![variance],
            alloc::vec![component],
        )
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn y(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn r(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.variances))
    }

    /// Selector matrix H (m × n).
    pub fn h(&self, n: usize) -> Result<DMatrix<f64>> {
        let mut h = DMatrix::zeros(self.dim(), n);
        for (row, &c) in self.selector.iter().enumerate() {
            if c >= n {
                return Err(Error::invalid(
                    "observation selector outside state dimension",
                ));
            }
            h[(row, c)] = 1.0;
        }
        Ok(h)
    }

    pub fn trace_r(&self) -> f64 {
        self.variances.iter().sum()
    }
}

/// Observations ordered by strictly increasing time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSeries {
    entries: Vec<Observation>,
}

impl ObservationSeries {
    pub fn new(entries: Vec<Observation>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].time >= w[1].time) {
            return Err(Error::invalid(
                "observation times must be strictly increasing",
            ));
        }
        Ok(Self { entries })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Observation] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn at(&self, time: usize) -> Option<&Observation> {
        self.entries
            .binary_search_by_key(&time, |o| o.time)
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Observations with `lo <= time <= hi`.
    pub fn between(&self, lo: usize, hi: usize) -> &[Observation] {
        let start = self.entries.partition_point(|o| o.time < lo);
        let end = self.entries.partition_point(|o| o.time <= hi);
        &self.entries[start..end.max(start)]
    }

    pub fn last_time(&self) -> Option<usize> {
        self.entries.last().map(|o| o.time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_unordered_times() {
        let a = Observation::scalar(3, 0, 1.0, 1.0).unwrap();
        let b = Observation::scalar(3, 0, 1.0, 1.0).unwrap();
        assert!(ObservationSeries::new(vec![a, b]).is_err());
    }

    #[test]
    fn rejects_nonpositive_variance() {
        assert!(Observation::scalar(0, 0, 1.0, 0.0).is_err());
    }

    #[test]
    fn between_is_inclusive() {
        let s = ObservationSeries::new(
            (1..=5)
                .map(|t| Observation::scalar(t * 10, 0, 0.0, 1.0).unwrap())
                .collect(),
        )
        .unwrap();
        let w = s.between(20, 40);
        assert_eq!(
            w.iter().map(|o| o.time).collect::<Vec<_>>(),
            vec![20, 30, 40]
        );
        assert!(s.between(41, 49).is_empty());
        assert_eq!(s.at(30).unwrap().time, 30);
    }

    #[test]
    fn selector_matrix() {
        let o = Observation::scalar(0, 1, 2.0, 0.5).unwrap();
        let h = o.h(3).unwrap();
        assert_eq!(h.as_slice(), &[0.0, 1.0, 0.0]);
        assert!(o.h(1).is_err());
    }
}
