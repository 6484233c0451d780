use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::vi::{ViIndex, ViVector};
use crate::error::{Error, Result};

/// Depth-one regression tree: `left` when the feature is `<= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stump {
    pub feature: ViIndex,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    fn eval(&self, x: f64) -> f64 {
        if x <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

/// Gradient-boosted stumps mapping vegetation indices to LAI.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionModel {
    features: Vec<ViIndex>,
    base: f64,
    learning_rate: f64,
    stumps: Vec<Stump>,
}

impl InversionModel {
    pub fn new(
        features: Vec<ViIndex>,
        base: f64,
        learning_rate: f64,
        stumps: Vec<Stump>,
    ) -> Result<Self> {
        if !base.is_finite() || !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(Error::invalid(
                "base must be finite and learning rate in (0, 1]",
            ));
        }
        for s in &stumps {
            if !features.contains(&s.feature) {
                return Err(Error::invalid(
                    "stump splits on a feature outside the model's feature set",
                ));
            }
            if s.threshold.is_nan() || !s.left.is_finite() || !s.right.is_finite() {
                return Err(Error::invalid("stump values must be finite"));
            }
        }
        Ok(Self {
            features,
            base,
            learning_rate,
            stumps,
        })
    }

    pub fn features(&self) -> &[ViIndex] {
        &self.features
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn stumps(&self) -> &[Stump] {
        &self.stumps
    }

    /// The model built from the first `rounds` stumps only.
    pub fn truncated(&self, rounds: usize) -> Self {
        Self {
            stumps: self.stumps[..rounds.min(self.stumps.len())].to_vec(),
            ..self.clone()
        }
    }

    /// Unclamped ensemble output.
    pub fn predict_raw(&self, v: &ViVector) -> Result<f64> {
        for &f in &self.features {
            if !v.is_defined(f) {
                return Err(Error::invalid(alloc::format!(
                    "feature {f} is undefined for this sample"
                )));
            }
        }
        let sum: f64 = self
            .stumps
            .iter()
            .map(|s| s.eval(v.get(s.feature).unwrap_or(0.0)))
            .sum();
        Ok(self.base + self.learning_rate * sum)
    }
}

/// Indices defined in every row, in canonical order.
pub fn defined_features(rows: &[(ViVector, f64)]) -> Vec<ViIndex> {
    ViIndex::ALL
        .iter()
        .copied()
        .filter(|&i| rows.iter().all(|(v, _)| v.is_defined(i)))
        .collect()
}

/// Fit on every index defined across all training rows.
pub fn fit_lai_inverter(
    rows: &[(ViVector, f64)],
    rounds: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<InversionModel> {
    let features = defined_features(rows);
    fit_lai_inverter_with(rows, &features, rounds, learning_rate, seed)
}

/// Least-squares boosting of stumps over `features`. The seed fixes the
/// order in which features are scanned, which decides ties between equally
/// good splits.
pub fn fit_lai_inverter_with(
    rows: &[(ViVector, f64)],
    features: &[ViIndex],
    rounds: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<InversionModel> {
    if rows.len() < 2 {
        return Err(Error::invalid("inversion needs at least two training rows"));
    }
    if rounds == 0 {
        return Err(Error::invalid("boosting rounds must be >= 1"));
    }
    if !(learning_rate > 0.0 && learning_rate <= 1.0) {
        return Err(Error::invalid("learning rate must lie in (0, 1]"));
    }
    if features.is_empty() {
        return Err(Error::invalid("no usable features for inversion"));
    }
    if rows.iter().any(|(_, y)| !y.is_finite()) {
        return Err(Error::invalid("LAI targets must be finite"));
    }
    let mut cols = Vec::with_capacity(features.len());
    for &f in features {
        let mut col = Vec::with_capacity(rows.len());
        for (v, _) in rows {
            col.push(v.get(f).ok_or_else(|| {
                Error::invalid(alloc::format!("feature {f} undefined in training rows"))
            })?);
        }
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        cols.push((f, col, order));
    }
    let mut rng = crate::rng::stream(seed, 0);
    cols.shuffle(&mut rng);

    let n = rows.len() as f64;
    let base = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let mut pred = alloc::vec![base; rows.len()];
    let mut stumps = Vec::new();
    for _ in 0..rounds {
        let resid: Vec<f64> = rows.iter().zip(&pred).map(|((_, y), p)| y - p).collect();
        let total: f64 = resid.iter().sum();
        let mut best: Option<(f64, Stump)> = None;
        for (f, col, order) in &cols {
            let mut left_sum = 0.0;
            for k in 0..order.len() - 1 {
                left_sum += resid[order[k]];
                let (xl, xr) = (col[order[k]], col[order[k + 1]]);
                if xl == xr {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = n - nl;
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl + right_sum * right_sum / nr;
                if best.as_ref().is_none_or(|(g, _)| gain > *g) {
                    let threshold = xl + (xr - xl) / 2.0;
                    best = Some((
                        gain,
                        Stump {
                            feature: *f,
                            threshold,
                            left: left_sum / nl,
                            right: right_sum / nr,
                        },
                    ));
                }
            }
        }
        let Some((gain, stump)) = best else { break };
        if gain <= total * total / n + 1e-15 * n {
            break;
        }
        for (p, (v, _)) in pred.iter_mut().zip(rows) {
            *p += learning_rate * stump.eval(v.get(stump.feature).unwrap_or(0.0));
        }
        stumps.push(stump);
    }
    InversionModel::new(features.to_vec(), base, learning_rate, stumps)
}

/// LAI estimate for one sample, floored at zero.
pub fn invert_lai(model: &InversionModel, v: &ViVector) -> Result<f64> {
    Ok(model.predict_raw(v)?.max(0.0))
}
