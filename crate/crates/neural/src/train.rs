//! Mini-batch training with warmup, cosine decay and global-norm clipping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::TtClassifier;
use crate::graph::{Graph, Var};
use crate::optim::Adam;
use crate::params::{Grads, ParamStore};
use crate::policy::PolicyModel;
use crate::NeuralError;

/// Mean losses above this are treated as divergence even when finite.
pub const DIVERGENCE_LOSS: f64 = 1e4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup: u64,
    /// Final learning rate as a fraction of `lr`.
    pub min_lr_frac: f64,
    /// Global gradient-norm limit; non-positive disables clipping.
    pub clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            batch_size: 16,
            lr: 3e-3,
            warmup: 50,
            min_lr_frac: 0.1,
            clip: 1.0,
            seed: 0,
        }
    }
}

/// Learning rate for the zero-based `step`: linear warmup, then cosine decay.
pub fn lr_at(cfg: &TrainConfig, step: u64) -> f64 {
    if step < cfg.warmup {
        return cfg.lr * (step + 1) as f64 / cfg.warmup as f64;
    }
    let span = cfg.steps.saturating_sub(cfg.warmup).max(1) as f64;
    let frac = ((step - cfg.warmup) as f64 / span).min(1.0);
    let cos = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
    cfg.lr * (cfg.min_lr_frac + (1.0 - cfg.min_lr_frac) * cos)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

impl StepLog {
    pub const CSV_HEADER: &'static str = "step,loss,lr,grad_norm";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.step, self.loss, self.lr, self.grad_norm)
    }
}

pub trait Trainable {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
}

impl Trainable for TtClassifier {
    fn params(&self) -> &ParamStore {
        TtClassifier::params(self)
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        TtClassifier::params_mut(self)
    }
}

impl Trainable for PolicyModel {
    fn params(&self) -> &ParamStore {
        PolicyModel::params(self)
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        PolicyModel::params_mut(self)
    }
}

/// Optimizer, data RNG and step counter; everything a resumed run needs.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub opt: Adam,
    pub rng: ChaCha8Rng,
    pub step: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, params: &ParamStore) -> Self {
        Trainer {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            opt: Adam::new(params),
            cfg,
            step: 0,
        }
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.cfg.steps
    }

    /// One Adam update on the mean loss of `batch`.
    pub fn step<M, E, F>(&mut self, model: &mut M, batch: &[E], loss: F) -> Result<StepLog, NeuralError>
    where
        M: Trainable,
        F: Fn(&M, &mut Graph, &E) -> Result<Var, NeuralError>,
    {
        if batch.is_empty() {
            return Err(NeuralError::Input("empty batch".into()));
        }
        let mut grads = Grads::zeros_like(model.params());
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for ex in batch {
            let mut g = Graph::new(model.params());
            let l = loss(model, &mut g, ex)?;
            let value = g.value(l).get(0, 0);
            if g.check_finite().is_err() || !value.is_finite() {
                return Err(NeuralError::Diverged {
                    step: self.step,
                    loss: value,
                });
            }
            total += value;
            g.backward(l, scale, &mut grads);
        }
        let mean = total * scale;
        if mean > DIVERGENCE_LOSS {
            return Err(NeuralError::Diverged {
                step: self.step,
                loss: mean,
            });
        }
        let grad_norm = grads.global_norm();
        if !grad_norm.is_finite() {
            return Err(NeuralError::Diverged {
                step: self.step,
                loss: mean,
            });
        }
        if self.cfg.clip > 0.0 && grad_norm > self.cfg.clip {
            grads.scale(self.cfg.clip / grad_norm);
        }
        let lr = lr_at(&self.cfg, self.step);
        self.opt.step(model.params_mut(), &grads, lr);
        if model.params().iter().any(|(_, _, p)| !p.is_finite()) {
            return Err(NeuralError::Diverged {
                step: self.step,
                loss: mean,
            });
        }
        let log = StepLog {
            step: self.step,
            loss: mean,
            lr,
            grad_norm,
        };
        self.step += 1;
        Ok(log)
    }
}
