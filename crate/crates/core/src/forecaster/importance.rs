use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::mlp::{predict_yield, Predictor};
use crate::error::{Error, Result};
use crate::metrics::{rmse, PairedSeries};

pub const IMPORTANCE_SHUFFLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Importance {
    /// Mean increase in RMSE when the column is shuffled.
    pub mean: f64,
    /// Sample standard deviation of that increase across shuffles.
    pub std: f64,
}

fn rmse_of(model: &Predictor, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
    let pred = xs
        .iter()
        .map(|x| predict_yield(model, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(rmse(&PairedSeries::new(ys.to_vec(), pred)?))
}

/// Increase in test RMSE after permuting each column across rows, averaged
/// over ten shuffles per column.
pub fn permutation_importance(
    model: &Predictor,
    test: &[(Vec<f64>, f64)],
    seed: u64,
) -> Result<Vec<Importance>> {
    if test.is_empty() {
        return Err(Error::invalid(
            "permutation importance needs a non-empty test set",
        ));
    }
    let ys: Vec<f64> = test.iter().map(|r| r.1).collect();
    let mut xs: Vec<Vec<f64>> = test.iter().map(|r| r.0.clone()).collect();
    let base = rmse_of(model, &xs, &ys)?;
    let mut out = Vec::with_capacity(model.inputs());
    for j in 0..model.inputs() {
        let original: Vec<f64> = xs.iter().map(|x| x[j]).collect();
        let mut rng = crate::rng::stream(seed, j as u64);
        let mut col = original.clone();
        let mut deltas = [0.0; IMPORTANCE_SHUFFLES];
        for d in &mut deltas {
            col.shuffle(&mut rng);
            for (x, v) in xs.iter_mut().zip(&col) {
                x[j] = *v;
            }
            *d = rmse_of(model, &xs, &ys)? - base;
        }
        for (x, v) in xs.iter_mut().zip(&original) {
            x[j] = *v;
        }
        let n = IMPORTANCE_SHUFFLES as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let var = deltas.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        out.push(Importance {
            mean,
            std: libm::sqrt(var),
        });
    }
    Ok(out)
}
