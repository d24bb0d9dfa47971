use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::network::{layer_dims_for, AutoencoderModel, Gradients, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Gradient-descent step size.
    pub eta: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without opt-set improvement tolerated before stopping.
    pub patience: usize,
    pub rng_seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            eta: 0.01,
            max_epochs: 100,
            batch_size: 32,
            patience: 5,
            rng_seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest opt-set mean MSE.
    pub model: AutoencoderModel,
    /// Opt-set mean MSE after each epoch, starting with epoch 1.
    pub history: Vec<f64>,
    /// Opt-set mean MSE of the freshly initialized model.
    pub initial_opt_mse: f64,
    /// 1-based.
    pub best_epoch: usize,
    pub seconds: f64,
}

impl TrainOutcome {
    pub fn best_opt_mse(&self) -> f64 {
        self.history[self.best_epoch - 1]
    }

    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }
}

/// Trains the standard topology for the input width of `trn`.
pub fn train(trn: &[Vec<f64>], opt: &[Vec<f64>], cfg: &TrainingConfig) -> Result<TrainOutcome> {
    let input = trn
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InsufficientData("training set is empty".into()))?;
    train_with_dims(&layer_dims_for(input), trn, opt, cfg)
}

/// Mini-batch gradient descent on reconstruction MSE with early stopping on
/// the opt-set mean MSE. Initialization and shuffling both derive from
/// `cfg.rng_seed`.
pub fn train_with_dims(
    dims: &[usize],
    trn: &[Vec<f64>],
    opt: &[Vec<f64>],
    cfg: &TrainingConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if trn.is_empty() || opt.is_empty() {
        return Err(Error::InsufficientData(
            "training and optimization sets must be non-empty".into(),
        ));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut model = AutoencoderModel::with_dims_rng(dims, cfg.rng_seed, &mut rng)?;
    if let Some(bad) = trn.iter().chain(opt).find(|x| x.len() != model.input_dim()) {
        return Err(Error::Contract(format!(
            "model expects {} inputs, got {}",
            model.input_dim(),
            bad.len()
        )));
    }
    let initial_opt_mse = model.mean_mse(opt)?;

    let mut order: Vec<usize> = (0..trn.len()).collect();
    let mut grads = Gradients::zeros_like(&model);
    let mut ws = Workspace::default();
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, AutoencoderModel)> = None;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            let mut loss = 0.0;
            for &i in batch {
                loss += model.accumulate_gradient(&trn[i], &mut grads, &mut ws);
            }
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, eta: cfg.eta });
            }
            grads.scale(1.0 / batch.len() as f64);
            model.apply(&grads, cfg.eta);
            if !model.is_finite() {
                return Err(Error::Divergence { epoch, eta: cfg.eta });
            }
        }
        let opt_mse = model.mean_mse(opt)?;
        if !opt_mse.is_finite() {
            return Err(Error::Divergence { epoch, eta: cfg.eta });
        }
        history.push(opt_mse);

        let improved = best.as_ref().is_none_or(|(_, m, _)| opt_mse < *m);
        if improved {
            best = Some((epoch, opt_mse, model.clone()));
        }
        let best_epoch = best.as_ref().map(|(e, _, _)| *e).unwrap_or(epoch);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }

    let (best_epoch, _, model) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        model,
        history,
        initial_opt_mse,
        best_epoch,
        seconds: started.elapsed().as_secs_f64(),
    })
}
