//! Agreement measures between measured and predicted values.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Pairs of (measured, predicted) values in a common unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    measured: Vec<f64>,
    predicted: Vec<f64>,
}

impl PairedSeries {
    pub fn new(measured: Vec<f64>, predicted: Vec<f64>) -> Result<Self> {
        if measured.len() != predicted.len() {
            return Err(Error::invalid("measured and predicted lengths differ"));
        }
        if measured.is_empty() {
            return Err(Error::invalid("paired series needs at least one pair"));
        }
        if measured.iter().chain(&predicted).any(|v| !v.is_finite()) {
            return Err(Error::invalid("paired series values must be finite"));
        }
        Ok(Self {
            measured,
            predicted,
        })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|p| p.0).collect(),
            pairs.iter().map(|p| p.1).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.measured.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measured.is_empty()
    }

    pub fn measured(&self) -> &[f64] {
        &self.measured
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Squared Pearson correlation between measured and predicted values.
///
/// Sign-blind: a perfectly anti-correlated series scores 1.
pub fn r_squared(s: &PairedSeries) -> Result<f64> {
    if s.len() < 2 {
        return Err(Error::Undefined(
            "r-squared needs at least two pairs".into(),
        ));
    }
    let (mx, my) = (mean(&s.measured), mean(&s.predicted));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in s.measured.iter().zip(&s.predicted) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("r-squared of a constant series".into()));
    }
    Ok(((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0))
}

pub fn rmse(s: &PairedSeries) -> f64 {
    let sse: f64 = s
        .measured
        .iter()
        .zip(&s.predicted)
        .map(|(x, y)| (y - x) * (y - x))
        .sum();
    libm::sqrt(sse / s.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn series(x: &[f64], y: &[f64]) -> PairedSeries {
        PairedSeries::new(x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn r_squared_identity_is_one() {
        assert_relative_eq!(
            r_squared(&series(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0])).unwrap(),
            1.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn r_squared_is_sign_blind() {
        assert_relative_eq!(
            r_squared(&series(&[1.0, 2.0, 4.0], &[-1.0, -2.0, -4.0])).unwrap(),
            1.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn r_squared_constant_series_is_undefined() {
        assert!(matches!(
            r_squared(&series(&[1.0, 2.0, 3.0], &[5.0; 3])),
            Err(Error::Undefined(_))
        ));
        assert!(matches!(
            r_squared(&series(&[2.0; 3], &[1.0, 2.0, 3.0])),
            Err(Error::Undefined(_))
        ));
        assert!(matches!(
            r_squared(&series(&[1.0], &[1.0])),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&series(&[1.0, 5.0], &[1.0, 5.0])), 0.0);
        assert_relative_eq!(
            rmse(&series(&[0.0, 0.0], &[3.0, 4.0])),
            libm::sqrt(12.5),
            max_relative = 1e-9
        );
        assert_relative_eq!(
            rmse(&series(&[0.0, 0.0], &[3.0, 4.0])),
            3.5355,
            epsilon = 1e-4
        );
        assert_relative_eq!(rmse(&series(&[1.0], &[3.0])), 2.0, max_relative = 1e-9);
    }

    #[test]
    fn rejects_bad_series() {
        assert!(PairedSeries::new(vec![], vec![]).is_err());
        assert!(PairedSeries::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(PairedSeries::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(-1e3..1e3f64, n),
                prop::collection::vec(-1e3..1e3f64, n),
            )
        })
    }

    proptest! {
        #[test]
        fn r_squared_in_unit_interval_and_affine_invariant(
            (x, y) in pairs(), a in 0.1..10.0f64, b in -100.0..100.0f64, neg in any::<bool>()
        ) {
            let s = series(&x, &y);
            if let Ok(r) = r_squared(&s) {
                prop_assert!((0.0..=1.0).contains(&r));
                let slope = if neg { -a } else { a };
                let y2: Vec<f64> = y.iter().map(|v| slope * v + b).collect();
                let r2 = r_squared(&series(&x, &y2)).unwrap();
                prop_assert!((r - r2).abs() < 1e-9);
            }
        }

        #[test]
        fn rmse_is_a_metric((x, y) in pairs(), shift in -10.0..10.0f64) {
            let z: Vec<f64> = y.iter().map(|v| v + shift).collect();
            let xy = rmse(&series(&x, &y));
            prop_assert!(xy >= 0.0);
            prop_assert_eq!(rmse(&series(&x, &x)), 0.0);
            let xz = rmse(&series(&x, &z));
            let yz = rmse(&series(&y, &z));
            prop_assert!(xz <= xy + yz + 1e-9);
        }
    }
}
