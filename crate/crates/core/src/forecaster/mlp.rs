use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    Sgd,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    pub hidden: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub optimizer: Optimizer,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            hidden: 32,
            learning_rate: 1e-3,
            max_epochs: 1000,
            batch_size: 16,
            patience: 20,
            optimizer: Optimizer::Adam,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::invalid(
                "hidden width, batch size and epochs must be >= 1",
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be > 0"));
        }
        Ok(())
    }
}

/// Per-column affine standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Column means and population standard deviations; constant columns get
    /// scale 1.
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, width: usize) -> Self {
        let mut mean = alloc::vec![0.0; width];
        let mut n = 0.0;
        for r in rows.clone() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
            n += 1.0;
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = alloc::vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| libm::sqrt(s / n))
            .map(|s| if s > 1e-12 { s } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .map(|((v, m), s)| (v - m) / s),
        );
    }
}

/// One-hidden-layer tanh regressor on standardized inputs and target.
///
/// Parameters are stored flat: input weights (row per hidden unit), hidden
/// biases, output weights, output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor {
    inputs: usize,
    hidden: usize,
    x_std: Standardizer,
    y_mean: f64,
    y_scale: f64,
    params: Vec<f64>,
}

pub fn param_count(inputs: usize, hidden: usize) -> usize {
    hidden * inputs + 2 * hidden + 1
}

impl Predictor {
    pub fn from_parts(
        inputs: usize,
        hidden: usize,
        x_std: Standardizer,
        y_mean: f64,
        y_scale: f64,
        params: Vec<f64>,
    ) -> Result<Self> {
        if inputs == 0 || hidden == 0 {
            return Err(Error::invalid("predictor needs >= 1 input and hidden unit"));
        }
        if x_std.mean.len() != inputs
            || x_std.scale.len() != inputs
            || params.len() != param_count(inputs, hidden)
        {
            return Err(Error::invalid(
                "predictor layout does not match its parameter counts",
            ));
        }
        let finite = params
            .iter()
            .chain(&x_std.mean)
            .chain(&x_std.scale)
            .all(|v| v.is_finite());
        if !finite
            || !y_mean.is_finite()
            || !(y_scale > 0.0)
            || x_std.scale.iter().any(|s| *s <= 0.0)
        {
            return Err(Error::invalid(
                "predictor values must be finite with positive scales",
            ));
        }
        Ok(Self {
            inputs,
            hidden,
            x_std,
            y_mean,
            y_scale,
            params,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn initialized(
        inputs: usize,
        hidden: usize,
        x_std: Standardizer,
        y_mean: f64,
        y_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = crate::rng::stream(seed, 0);
        let mut params = alloc::vec![0.0; param_count(inputs, hidden)];
        let a1 = libm::sqrt(6.0 / (inputs + hidden) as f64);
        for w in &mut params[..hidden * inputs] {
            *w = rng.random_range(-a1..a1);
        }
        let a2 = libm::sqrt(6.0 / (hidden + 1) as f64);
        let off = hidden * inputs + hidden;
        for w in &mut params[off..off + hidden] {
            *w = rng.random_range(-a2..a2);
        }
        Self::from_parts(inputs, hidden, x_std, y_mean, y_scale, params)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.x_std
    }

    pub fn target_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn target_scale(&self) -> f64 {
        self.y_scale
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.inputs {
            return Err(Error::invalid(alloc::format!(
                "design vector has {} values, model expects {}",
                x.len(),
                self.inputs
            )));
        }
        Ok(())
    }

    /// Network output in standardized target units; `act` receives the
    /// hidden activations.
    fn forward(&self, params: &[f64], z: &[f64], act: &mut [f64]) -> f64 {
        let (h, d) = (self.hidden, self.inputs);
        let (w1, rest) = params.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let mut out = b2[0];
        for k in 0..h {
            let row = &w1[k * d..(k + 1) * d];
            let mut a = b1[k];
            for (w, x) in row.iter().zip(z) {
                a += w * x;
            }
            act[k] = libm::tanh(a);
            out += w2[k] * act[k];
        }
        out
    }

    /// Adds `coef * d(output)/d(params)` into `grad`.
    fn backward(&self, params: &[f64], z: &[f64], act: &[f64], coef: f64, grad: &mut [f64]) {
        let (h, d) = (self.hidden, self.inputs);
        let w2 = &params[h * d + h..h * d + 2 * h];
        for k in 0..h {
            let g_out = coef * act[k];
            grad[h * d + h + k] += g_out;
            let g_pre = coef * w2[k] * (1.0 - act[k] * act[k]);
            grad[h * d + k] += g_pre;
            let row = &mut grad[k * d..(k + 1) * d];
            for (g, x) in row.iter_mut().zip(z) {
                *g += g_pre * x;
            }
        }
        grad[h * d + 2 * h] += coef;
    }

    /// Unclamped prediction in target units.
    pub fn predict_raw(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        let mut z = Vec::with_capacity(self.inputs);
        self.x_std.apply(x, &mut z);
        let mut act = alloc::vec![0.0; self.hidden];
        Ok(self.y_mean + self.y_scale * self.forward(&self.params, &z, &mut act))
    }
}

/// Yield prediction, floored at zero.
pub fn predict_yield(model: &Predictor, x: &[f64]) -> Result<f64> {
    Ok(model.predict_raw(x)?.max(0.0))
}

/// Per-epoch losses (standardized mean squared error) of a training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch (0-based) whose weights were kept.
    pub best_epoch: usize,
}

fn check_rows(rows: &[(Vec<f64>, f64)], what: &str) -> Result<usize> {
    let first = rows
        .first()
        .ok_or_else(|| Error::invalid(alloc::format!("{what} split is empty")))?;
    let d = first.0.len();
    if d == 0 {
        return Err(Error::invalid("design vectors are empty"));
    }
    for (x, y) in rows {
        if x.len() != d {
            return Err(Error::invalid(alloc::format!(
                "{what} split has ragged design vectors"
            )));
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(alloc::format!(
                "{what} split has non-finite values"
            )));
        }
    }
    Ok(d)
}

struct Standardized {
    z: Vec<Vec<f64>>,
    t: Vec<f64>,
}

fn standardize(model: &Predictor, rows: &[(Vec<f64>, f64)]) -> Standardized {
    let z = rows
        .iter()
        .map(|(x, _)| {
            let mut z = Vec::with_capacity(x.len());
            model.x_std.apply(x, &mut z);
            z
        })
        .collect();
    let t = rows
        .iter()
        .map(|(_, y)| (y - model.y_mean) / model.y_scale)
        .collect();
    Standardized { z, t }
}

fn mse(model: &Predictor, params: &[f64], data: &Standardized, act: &mut [f64]) -> f64 {
    let se: f64 = data
        .z
        .iter()
        .zip(&data.t)
        .map(|(z, t)| {
            let e = model.forward(params, z, act) - t;
            e * e
        })
        .sum();
    se / data.t.len() as f64
}

pub fn train_predictor(
    train: &[(Vec<f64>, f64)],
    val: &[(Vec<f64>, f64)],
    hyper: &Hyper,
    seed: u64,
) -> Result<Predictor> {
    fit_predictor(train, val, hyper, seed).map(|(m, _)| m)
}

/// Mini-batch training on mean squared error with early stopping on the
/// validation loss; the best validation weights are returned.
pub fn fit_predictor(
    train: &[(Vec<f64>, f64)],
    val: &[(Vec<f64>, f64)],
    hyper: &Hyper,
    seed: u64,
) -> Result<(Predictor, TrainHistory)> {
    hyper.validate()?;
    let d = check_rows(train, "training")?;
    if check_rows(val, "validation")? != d {
        return Err(Error::invalid(
            "validation design vectors differ in length from training",
        ));
    }
    let x_std = Standardizer::fit(train.iter().map(|r| r.0.as_slice()), d);
    let ys: Vec<f64> = train.iter().map(|r| r.1).collect();
    let y_std = Standardizer::fit(ys.chunks(1), 1);
    let mut model =
        Predictor::initialized(d, hyper.hidden, x_std, y_std.mean[0], y_std.scale[0], seed)?;
    let tr = standardize(&model, train);
    let va = standardize(&model, val);

    let np = model.params.len();
    let mut params = model.params.clone();
    let mut grad = alloc::vec![0.0; np];
    let (mut m1, mut m2) = (alloc::vec![0.0; np], alloc::vec![0.0; np]);
    let mut act = alloc::vec![0.0; hyper.hidden];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = crate::rng::stream(seed, 1);
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let mut step = 0i32;

    let mut history = TrainHistory::default();
    let mut best = (mse(&model, &params, &va, &mut act), params.clone(), 0usize);
    let mut stale = 0;
    for epoch in 0..hyper.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 2.0 / batch.len() as f64;
            for &i in batch {
                let out = model.forward(&params, &tr.z[i], &mut act);
                model.backward(&params, &tr.z[i], &act, scale * (out - tr.t[i]), &mut grad);
            }
            step += 1;
            match hyper.optimizer {
                Optimizer::Sgd => {
                    for (p, g) in params.iter_mut().zip(&grad) {
                        *p -= hyper.learning_rate * g;
                    }
                }
                Optimizer::Adam => {
                    let c1 = 1.0 - libm::pow(beta1, step as f64);
                    let c2 = 1.0 - libm::pow(beta2, step as f64);
                    for i in 0..np {
                        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
                        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
                        params[i] -=
                            hyper.learning_rate * (m1[i] / c1) / (libm::sqrt(m2[i] / c2) + eps);
                    }
                }
            }
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::numerical("predictor weights diverged"));
        }
        history.train_loss.push(mse(&model, &params, &tr, &mut act));
        let v = mse(&model, &params, &va, &mut act);
        history.val_loss.push(v);
        if v < best.0 {
            best = (v, params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                break;
            }
        }
    }
    model.params = best.1;
    history.best_epoch = best.2;
    Ok((model, history))
}

/// Squared error of one sample in standardized target units and its
/// gradient with respect to every parameter.
pub fn loss_gradient(model: &Predictor, x: &[f64], y: f64) -> Result<(f64, Vec<f64>)> {
    model.check_len(x)?;
    let mut z = Vec::with_capacity(x.len());
    model.x_std.apply(x, &mut z);
    let t = (y - model.y_mean) / model.y_scale;
    let mut act = alloc::vec![0.0; model.hidden];
    let out = model.forward(&model.params, &z, &mut act);
    let mut grad = alloc::vec![0.0; model.params.len()];
    model.backward(&model.params, &z, &act, 2.0 * (out - t), &mut grad);
    Ok(((out - t) * (out - t), grad))
}

fn sq(v: f64) -> f64 {
    v * v
}

/// Largest relative discrepancy between the analytic gradient and central
/// differences with step `h`, over every parameter. Relative error is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn gradient_check(model: &Predictor, x: &[f64], y: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be > 0"));
    }
    let (_, analytic) = loss_gradient(model, x, y)?;
    let mut z = Vec::with_capacity(x.len());
    model.x_std.apply(x, &mut z);
    let t = (y - model.y_mean) / model.y_scale;
    let mut act = alloc::vec![0.0; model.hidden];
    let mut p = model.params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = sq(model.forward(&p, &z, &mut act) - t);
        p[i] = orig - h;
        let down = sq(model.forward(&p, &z, &mut act) - t);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}
