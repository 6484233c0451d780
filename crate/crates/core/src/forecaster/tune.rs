use alloc::vec::Vec;

use super::mlp::{fit_predictor, predict_yield, Hyper, Predictor};
use crate::error::Result;
use crate::metrics::{rmse, PairedSeries};
use crate::tuning::{halving_search, sample_uniform, SearchOutcome};

/// Search box: log10 learning rate and hidden width.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperSpace {
    pub log10_lr: (f64, f64),
    pub hidden: (usize, usize),
}

impl Default for HyperSpace {
    fn default() -> Self {
        Self {
            log10_lr: (-4.0, -2.0),
            hidden: (8, 64),
        }
    }
}

impl HyperSpace {
    fn bounds(&self) -> Vec<(f64, f64)> {
        alloc::vec![
            self.log10_lr,
            (self.hidden.0 as f64, self.hidden.1 as f64 + 1.0)
        ]
    }

    pub fn apply(&self, base: &Hyper, point: &[f64]) -> Hyper {
        let hidden = (point[1] as usize).clamp(self.hidden.0.max(1), self.hidden.1.max(1));
        Hyper {
            learning_rate: libm::pow(10.0, point[0]),
            hidden,
            ..base.clone()
        }
    }
}

pub struct Tuned {
    pub hyper: Hyper,
    pub model: Predictor,
    pub val_rmse: f64,
    pub search: SearchOutcome,
}

fn val_rmse(model: &Predictor, val: &[(Vec<f64>, f64)]) -> Result<f64> {
    let pred = val
        .iter()
        .map(|(x, _)| predict_yield(model, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(rmse(&PairedSeries::new(
        val.iter().map(|r| r.1).collect(),
        pred,
    )?))
}

/// Random search with successive halving: each candidate first trains for a
/// quarter of the epoch budget; survivors train fully and are ranked by
/// validation RMSE.
pub fn tune_predictor(
    train: &[(Vec<f64>, f64)],
    val: &[(Vec<f64>, f64)],
    base: &Hyper,
    space: &HyperSpace,
    budget: usize,
    seed: u64,
) -> Result<Tuned> {
    base.validate()?;
    let candidates = sample_uniform(&space.bounds(), budget, seed)?;
    let short = Hyper {
        max_epochs: (base.max_epochs / 4).max(1),
        ..base.clone()
    };
    let search = halving_search(
        candidates,
        |p| {
            val_rmse(
                &fit_predictor(train, val, &space.apply(&short, p), seed)?.0,
                val,
            )
        },
        |p| {
            val_rmse(
                &fit_predictor(train, val, &space.apply(base, p), seed)?.0,
                val,
            )
        },
    )?;
    let hyper = space.apply(base, &search.best);
    let model = fit_predictor(train, val, &hyper, seed)?.0;
    let val_rmse = val_rmse(&model, val)?;
    Ok(Tuned {
        hyper,
        model,
        val_rmse,
        search,
    })
}
