use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::autodiff::{OptimizerKind, OptimizerState};
use crate::model::Mode;
use crate::{Error, Result};

/// Which epoch's parameters `train` returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Lowest dev EER, ties broken by lower dev spoof loss, then earlier epoch.
    BestDev,
    Final,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub alpha: f64,
    /// Defaults to the mode's value (0, -1 or +1).
    pub lambda: Option<f64>,
    pub fold_alpha_into_lambda: bool,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without dev improvement before stopping; 0 disables.
    pub patience: usize,
    pub selection: Selection,
    /// Training crop length in samples.
    pub clip_len: usize,
    /// Spoof-loss weights `[bonafide, spoof]`; inverse train frequency when
    /// absent.
    pub class_weights: Option<[f64; 2]>,
    pub augment: bool,
    /// Probability that an utterance is left unaugmented.
    pub p_no_augment: f64,
    pub seed: u64,
    pub init_checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::SpeakerInvariant,
            alpha: 0.1,
            lambda: None,
            fold_alpha_into_lambda: false,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 32,
            epochs: 30,
            patience: 5,
            selection: Selection::BestDev,
            clip_len: 1000,
            class_weights: None,
            augment: true,
            p_no_augment: 0.2,
            seed: 0,
            init_checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn effective_lambda(&self) -> f64 {
        match self.mode {
            Mode::Baseline => 0.0,
            m => self.lambda.unwrap_or(m.default_lambda()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if let Some(l) = self.lambda {
            if !l.is_finite() {
                return bad(format!("lambda must be finite, got {l}"));
            }
        }
        self.mode.check_lambda(self.effective_lambda())?;
        if self.fold_alpha_into_lambda && self.mode.has_speaker_head() && self.alpha == 0.0 {
            return bad("fold_alpha_into_lambda needs alpha > 0".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.clip_len == 0 {
            return bad("clip_len must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.p_no_augment) {
            return bad(format!("p_no_augment must lie in [0, 1], got {}", self.p_no_augment));
        }
        if let Some(w) = self.class_weights {
            if w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || w.iter().all(|v| *v == 0.0) {
                return bad(format!("class_weights {w:?} must be non-negative and not all zero"));
            }
        }
        if self.optimizer == OptimizerKind::Adam
            && !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.adam_eps > 0.0)
        {
            return bad("Adam needs beta1, beta2 in [0, 1) and adam_eps > 0".into());
        }
        Ok(())
    }

    pub fn optimizer_state(&self) -> OptimizerState {
        match self.optimizer {
            OptimizerKind::Sgd => OptimizerState::sgd(self.learning_rate),
            OptimizerKind::Adam => OptimizerState::adam(self.learning_rate, self.beta1, self.beta2, self.adam_eps),
        }
    }
}
