use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{Model, Utterance};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Global gradient-norm clip (infinite disables clipping).
    pub clip_norm: f64,
    pub epochs: usize,
    /// Utterances per update; gradients are averaged over the batch.
    pub batch: usize,
    /// Learning-rate multiplier applied after every epoch.
    pub anneal: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Standard deviation of the Gaussian perturbation applied to the
    /// weights when computing each step's gradient (0 disables).
    pub weight_noise: f64,
    /// Stop once an epoch's mean per-symbol loss falls below this (0 never).
    pub stop_below: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            clip_norm: 5.0,
            epochs: 10,
            batch: 8,
            anneal: 1.0,
            seed: 0,
            optimizer: Optimizer::Sgd,
            weight_noise: 0.0,
            stop_below: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be finite and non-negative".into()));
        }
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("batch and epochs must be at least 1".into()));
        }
        if !(self.clip_norm > 0.0) || !(self.anneal > 0.0) || !(self.weight_noise >= 0.0) {
            return Err(Error::Config("clip_norm and anneal must be positive, weight_noise non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    /// Mean loss per utterance.
    pub loss: f64,
    /// Total loss over total reference symbols.
    pub per_symbol: f64,
    pub steps: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (((x, &gv), m), v) in p.iter_mut().zip(g).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::B1 * *m + (1.0 - Self::B1) * gv;
            *v = Self::B2 * *v + (1.0 - Self::B2) * gv * gv;
            *x -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Minibatch training. Shuffling uses one child stream of `cfg.seed` per
/// epoch; per-utterance gradients may be computed in parallel but are summed
/// in utterance-id order, so runs are bit-reproducible.
pub fn train(model: &mut Model, data: &[Utterance], cfg: &TrainConfig) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let root = SeededRng::new(cfg.seed);
    let n = model.parameter_count();
    let mut adam = Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 };
    let mut lr = cfg.lr;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut noise_rng = root.child(u32::MAX as u64);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        root.child(epoch as u64).shuffle(&mut order);
        let (mut total, mut symbols, mut steps) = (0.0, 0usize, 0);
        for chunk in order.chunks(cfg.batch) {
            let mut batch = chunk.to_vec();
            batch.sort_by(|&a, &b| data[a].id.cmp(&data[b].id));

            let noisy;
            let eval = if cfg.weight_noise > 0.0 {
                let mut m = model.clone();
                for v in m.params_mut().values_mut() {
                    *v += cfg.weight_noise * noise_rng.normal();
                }
                noisy = m;
                &noisy
            } else {
                &*model
            };
            let results: Vec<Result<(f64, Vec<f64>)>> = batch
                .par_iter()
                .map(|&i| {
                    let r = eval.loss(&data[i])?;
                    if !r.loss.is_finite() || r.grad.iter().any(|g| !g.is_finite()) {
                        return Err(Error::NonFiniteLoss(data[i].id.clone()));
                    }
                    Ok((r.loss, r.grad))
                })
                .collect();
            let mut grad = vec![0.0; n];
            for (r, &i) in results.into_iter().zip(&batch) {
                let (loss, g) = r?;
                total += loss;
                symbols += data[i].reference.chars().count().max(1);
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.clip_norm {
                let s = cfg.clip_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            let p = model.params_mut().values_mut();
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for (x, g) in p.iter_mut().zip(&grad) {
                        *x -= lr * g;
                    }
                }
                Optimizer::Adam => adam.step(p, &grad, lr),
            }
            steps += 1;
        }
        let m = EpochMetrics {
            epoch,
            lr,
            loss: total / data.len() as f64,
            per_symbol: total / symbols as f64,
            steps,
        };
        let stop = m.per_symbol < cfg.stop_below;
        history.push(m);
        if stop {
            break;
        }
        lr *= cfg.anneal;
    }
    Ok(history)
}
