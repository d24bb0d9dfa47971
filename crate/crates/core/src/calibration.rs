//! Hyperparameter search, anomaly threshold and voting-window calibration.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    fit_normalizer, train, AutoencoderModel, ModelEnvelope, Normalizer, ReconstructionError, TrainOutcome,
    TrainingConfig,
};
use crate::dataset::FeatureRecord;
use crate::error::{Error, Result};
use crate::stats::SCHEMA_VERSION;

pub const PROFILE_FORMAT: &str = "iotguard-profile";
pub const PROFILE_VERSION: u32 = 1;
pub const DEFAULT_WS_MAX: usize = 500;

/// Learning rates spanning 0.003 to 0.028.
pub const DEFAULT_ETA_GRID: [f64; 6] = [0.003, 0.005, 0.008, 0.012, 0.018, 0.028];

/// Deployable detector for one device. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorProfile {
    model: AutoencoderModel,
    normalizer: Normalizer,
    tr_star: f64,
    ws_star: usize,
    schema_version: u32,
    device_id: String,
    eta: f64,
    epochs: usize,
}

impl DetectorProfile {
    pub fn new(
        model: AutoencoderModel,
        normalizer: Normalizer,
        tr_star: f64,
        ws_star: usize,
        device_id: impl Into<String>,
    ) -> Result<Self> {
        Self::with_training(model, normalizer, tr_star, ws_star, device_id, 0.0, 0)
    }

    fn with_training(
        model: AutoencoderModel,
        normalizer: Normalizer,
        tr_star: f64,
        ws_star: usize,
        device_id: impl Into<String>,
        eta: f64,
        epochs: usize,
    ) -> Result<Self> {
        if !(tr_star >= 0.0 && tr_star.is_finite()) {
            return Err(Error::Contract(format!("tr* must be finite and >= 0, got {tr_star}")));
        }
        if ws_star == 0 {
            return Err(Error::Contract("ws* must be at least 1".into()));
        }
        if normalizer.dim() != model.input_dim() {
            return Err(Error::Contract(format!(
                "normalizer width {} differs from model input {}",
                normalizer.dim(),
                model.input_dim()
            )));
        }
        Ok(DetectorProfile {
            model,
            normalizer,
            tr_star,
            ws_star,
            schema_version: SCHEMA_VERSION,
            device_id: device_id.into(),
            eta,
            epochs,
        })
    }

    pub fn model(&self) -> &AutoencoderModel {
        &self.model
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn tr_star(&self) -> f64 {
        self.tr_star
    }

    pub fn ws_star(&self) -> usize {
        self.ws_star
    }

    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    /// Learning rate the model was trained with; 0 if unknown.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Epoch whose parameters were kept; 0 if unknown.
    pub fn epochs(&self) -> usize {
        self.epochs
    }

    /// Reconstruction error of a raw (unnormalized) feature vector.
    pub fn reconstruction_error(&self, features: &[f64]) -> Result<ReconstructionError> {
        let x = self.normalizer.transform(features)?;
        self.model.mse(&x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperSearchSpace {
    pub eta_grid: Vec<f64>,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub ws_max: usize,
}

impl Default for HyperSearchSpace {
    fn default() -> Self {
        HyperSearchSpace {
            eta_grid: DEFAULT_ETA_GRID.to_vec(),
            max_epochs: 100,
            patience: 5,
            batch_size: 32,
            seed: 0,
            ws_max: DEFAULT_WS_MAX,
        }
    }
}

impl HyperSearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.eta_grid.is_empty() {
            return Err(Error::Config("eta_grid must not be empty".into()));
        }
        if let Some(eta) = self.eta_grid.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::Config(format!("eta candidates must be positive, got {eta}")));
        }
        if self.ws_max == 0 {
            return Err(Error::Config("ws_max must be at least 1".into()));
        }
        self.training_config(self.eta_grid[0]).validate()
    }

    pub fn training_config(&self, eta: f64) -> TrainingConfig {
        TrainingConfig {
            eta,
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            rng_seed: self.seed,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let space: HyperSearchSpace =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        space.validate()?;
        Ok(space)
    }
}

/// `mean + sample std` (n - 1 denominator) of the opt-set errors.
pub fn compute_threshold(opt_mses: &[ReconstructionError]) -> Result<f64> {
    let n = opt_mses.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "threshold needs at least 2 reconstruction errors, got {n}"
        )));
    }
    let mean = opt_mses.iter().map(|e| e.0).sum::<f64>() / n as f64;
    let ss: f64 = opt_mses.iter().map(|e| (e.0 - mean) * (e.0 - mean)).sum();
    Ok(mean + (ss / (n - 1) as f64).sqrt())
}

/// Number of length-`ws` windows (stride 1) in which anomalous flags hold a
/// strict majority.
pub fn majority_windows(flags: &[bool], ws: usize) -> usize {
    if ws == 0 || ws > flags.len() {
        return 0;
    }
    let mut count = flags[..ws].iter().filter(|&&f| f).count();
    let mut hits = usize::from(2 * count > ws);
    for i in ws..flags.len() {
        count += usize::from(flags[i]);
        count -= usize::from(flags[i - ws]);
        hits += usize::from(2 * count > ws);
    }
    hits
}

/// Smallest window whose strict-majority vote never fires on `opt_flags`.
pub fn search_window_size(opt_flags: &[bool], ws_max: usize) -> Result<usize> {
    if opt_flags.is_empty() {
        return Err(Error::InsufficientData("window search needs at least one flag".into()));
    }
    if ws_max == 0 {
        return Err(Error::Config("ws_max must be at least 1".into()));
    }
    if let Some(ws) = (1..=ws_max).find(|&ws| majority_windows(opt_flags, ws) == 0) {
        return Ok(ws);
    }
    let windows = opt_flags.len() + 1 - ws_max;
    Err(Error::WindowSearch {
        ws_max,
        violating_rate: majority_windows(opt_flags, ws_max) as f64 / windows as f64,
    })
}

#[derive(Debug, Clone)]
pub enum TrialOutcome {
    Trained(TrainOutcome),
    Diverged { epoch: usize },
}

/// One grid point of the learning-rate search.
#[derive(Debug, Clone)]
pub struct EtaTrial {
    pub eta: f64,
    pub outcome: TrialOutcome,
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub profile: DetectorProfile,
    pub trials: Vec<EtaTrial>,
    /// Index into `trials` of the selected learning rate.
    pub selected: usize,
    pub opt_mses: Vec<ReconstructionError>,
    /// Wall time of the whole search plus threshold and window calibration.
    pub seconds: f64,
}

impl Calibration {
    pub fn selected_outcome(&self) -> &TrainOutcome {
        match &self.trials[self.selected].outcome {
            TrialOutcome::Trained(o) => o,
            TrialOutcome::Diverged { .. } => unreachable!("a diverged trial is never selected"),
        }
    }
}

/// Trains one model per learning rate, keeps the one with the lowest opt-set
/// MSE, then derives tr* and ws* from DS_opt.
pub fn calibrate(
    trn: &[FeatureRecord],
    opt: &[FeatureRecord],
    space: &HyperSearchSpace,
    device_id: &str,
) -> Result<Calibration> {
    calibrate_with(trn, opt, space, device_id, train)
}

fn calibrate_with(
    trn: &[FeatureRecord],
    opt: &[FeatureRecord],
    space: &HyperSearchSpace,
    device_id: &str,
    trainer: impl Fn(&[Vec<f64>], &[Vec<f64>], &TrainingConfig) -> Result<TrainOutcome>,
) -> Result<Calibration> {
    space.validate()?;
    if trn.is_empty() || opt.is_empty() {
        return Err(Error::InsufficientData(
            "calibration needs non-empty training and optimization sets".into(),
        ));
    }
    if let Some(r) = trn.iter().chain(opt).find(|r| !r.label.is_benign()) {
        return Err(Error::Contract(format!(
            "calibration takes benign records only, found {}",
            r.label
        )));
    }
    let started = Instant::now();
    let normalizer = fit_normalizer(trn)?;
    let trn_x = normalizer.transform_all(trn)?;
    let opt_x = normalizer.transform_all(opt)?;

    let mut trials = Vec::with_capacity(space.eta_grid.len());
    let mut first_divergence = None;
    for &eta in &space.eta_grid {
        let outcome = match trainer(&trn_x, &opt_x, &space.training_config(eta)) {
            Ok(o) => TrialOutcome::Trained(o),
            Err(e @ Error::Divergence { epoch, .. }) => {
                first_divergence.get_or_insert(e);
                TrialOutcome::Diverged { epoch }
            }
            Err(e) => return Err(e),
        };
        trials.push(EtaTrial { eta, outcome });
    }

    let selected = trials
        .iter()
        .enumerate()
        .filter_map(|(i, t)| match &t.outcome {
            TrialOutcome::Trained(o) => Some((i, o.best_opt_mse())),
            TrialOutcome::Diverged { .. } => None,
        })
        .fold(None, |best: Option<(usize, f64)>, (i, m)| match best {
            Some((_, bm)) if bm <= m => best,
            _ => Some((i, m)),
        })
        .map(|(i, _)| i);
    let Some(selected) = selected else {
        return Err(first_divergence.expect("every trial diverged"));
    };
    let TrialOutcome::Trained(outcome) = &trials[selected].outcome else {
        unreachable!()
    };

    let opt_mses = outcome.model.mses(&opt_x)?;
    let tr_star = compute_threshold(&opt_mses)?;
    let flags: Vec<bool> = opt_mses.iter().map(|e| e.0 > tr_star).collect();
    let ws_star = search_window_size(&flags, space.ws_max)?;
    let profile = DetectorProfile::with_training(
        outcome.model.clone(),
        normalizer,
        tr_star,
        ws_star,
        device_id,
        trials[selected].eta,
        outcome.best_epoch,
    )?;
    Ok(Calibration {
        profile,
        trials,
        selected,
        opt_mses,
        seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Serialize, Deserialize)]
struct ProfileEnvelope {
    format: String,
    version: u32,
    device_id: String,
    schema_version: u32,
    tr_star: f64,
    ws_star: usize,
    eta: f64,
    epochs: usize,
    model: ModelEnvelope,
}

pub fn save_profile(profile: &DetectorProfile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let env = ProfileEnvelope {
        format: PROFILE_FORMAT.into(),
        version: PROFILE_VERSION,
        device_id: profile.device_id.clone(),
        schema_version: profile.schema_version,
        tr_star: profile.tr_star,
        ws_star: profile.ws_star,
        eta: profile.eta,
        epochs: profile.epochs,
        model: ModelEnvelope::new(&profile.model, &profile.normalizer),
    };
    let json = serde_json::to_vec(&env).map_err(|e| Error::Corrupt(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Loads a profile, refusing one built for a different feature schema.
pub fn load_profile(path: impl AsRef<Path>) -> Result<DetectorProfile> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    profile_from_json(&bytes).map_err(|e| match e {
        Error::Corrupt(m) => Error::Corrupt(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn profile_from_json(bytes: &[u8]) -> Result<DetectorProfile> {
    let env: ProfileEnvelope = serde_json::from_slice(bytes).map_err(|e| Error::Corrupt(e.to_string()))?;
    if env.format != PROFILE_FORMAT {
        return Err(Error::Corrupt(format!("not a profile (format {:?})", env.format)));
    }
    if env.version != PROFILE_VERSION {
        return Err(Error::VersionMismatch {
            expected: format!("profile v{PROFILE_VERSION}"),
            found: format!("profile v{}", env.version),
        });
    }
    if env.schema_version != SCHEMA_VERSION {
        return Err(Error::VersionMismatch {
            expected: format!("feature schema v{SCHEMA_VERSION}"),
            found: format!("feature schema v{}", env.schema_version),
        });
    }
    let (model, normalizer) = env.model.into_parts()?;
    DetectorProfile::with_training(
        model,
        normalizer,
        env.tr_star,
        env.ws_star,
        env.device_id,
        env.eta,
        env.epochs,
    )
    .map_err(|e| Error::Corrupt(e.to_string()))
}
