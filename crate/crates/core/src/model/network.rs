use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EncoderConfig, HeadConfig, MHFAConfig, Mode};
use super::encoder::{encode, init_encoder_params, LayerStack};
use super::mhfa::{init_head_params, mhfa_pool};
use crate::autodiff::{Bindings, ParamGroup, ParameterSet, Tape, Var};
use crate::rng::{domain, rng_for};
use crate::{Error, Result};

pub const SPOOF_PREFIX: &str = "spoof_head";
pub const SPEAKER_PREFIX: &str = "speaker_head";

/// Class index of bona fide trials in the spoof head.
pub const BONAFIDE_CLASS: usize = 0;
pub const SPOOF_CLASS: usize = 1;

/// Architecture section of an experiment config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head: HeadConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.head.with_classes(2).validate()
    }
}

/// How the speaker branch is wired for one forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpeakerBranch {
    /// Gradient reversal with the given coefficient before the speaker head.
    Reversal(f64),
    /// Speaker head reads the stack directly, no reversal node.
    Bypass,
    /// Speaker head not evaluated.
    Skip,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `B x 2`
    pub spoof_logits: Var,
    /// `B x D`, absent in baseline mode or with [`SpeakerBranch::Skip`].
    pub speaker_logits: Option<Var>,
    /// Spoof-head embeddings, one `1 x d_e` row per utterance.
    pub spoof_embeddings: Vec<Var>,
}

/// Spoof score and spoof-head embedding for one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub score: f64,
    pub embedding: Vec<f64>,
    pub spoof_logits: [f64; 2],
}

/// Feature extractor, spoof head and (outside baseline mode) speaker head.
#[derive(Clone, Debug, PartialEq)]
pub struct SInMTNetwork {
    pub model: ModelConfig,
    pub mode: Mode,
    pub lambda: f64,
    pub alpha: f64,
    pub n_speakers: usize,
    pub params: ParameterSet,
}

impl SInMTNetwork {
    pub fn new(model: &ModelConfig, mode: Mode, lambda: f64, alpha: f64, n_speakers: usize, seed: u64) -> Result<Self> {
        model.validate()?;
        mode.check_lambda(lambda)?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if mode.has_speaker_head() && n_speakers == 0 {
            return Err(Error::Config("speaker head needs at least one speaker".into()));
        }
        let enc = &model.encoder;
        let n_layers = enc.n_stack_layers();
        let mut params = ParameterSet::new();
        let mut rng: ChaCha8Rng = rng_for(seed, domain::INIT, 0);
        init_encoder_params(enc, &mut params, &mut rng)?;
        let mut rng = rng_for(seed, domain::INIT, 1);
        init_head_params(
            SPOOF_PREFIX,
            &model.head.with_classes(2),
            enc.model_dim,
            n_layers,
            ParamGroup::SpoofHead,
            &mut params,
            &mut rng,
        )?;
        if mode.has_speaker_head() {
            let mut rng = rng_for(seed, domain::INIT, 2);
            init_head_params(
                SPEAKER_PREFIX,
                &model.head.with_classes(n_speakers),
                enc.model_dim,
                n_layers,
                ParamGroup::SpeakerHead,
                &mut params,
                &mut rng,
            )?;
        }
        Ok(SInMTNetwork {
            model: model.clone(),
            mode,
            lambda: if mode == Mode::Baseline { 0.0 } else { lambda },
            alpha,
            n_speakers: if mode.has_speaker_head() { n_speakers } else { 0 },
            params,
        })
    }

    pub fn spoof_head_config(&self) -> MHFAConfig {
        self.model.head.with_classes(2)
    }

    pub fn speaker_head_config(&self) -> Option<MHFAConfig> {
        self.mode
            .has_speaker_head()
            .then(|| self.model.head.with_classes(self.n_speakers))
    }

    /// Coefficient for the reversal node. With `fold_alpha` the speaker loss
    /// weight is divided back out of the extractor path, so the extractor sees
    /// `-lambda * dLd` while the speaker head still sees `alpha * dLd`.
    pub fn grl_coefficient(&self, fold_alpha: bool) -> Result<f64> {
        if !fold_alpha {
            return Ok(self.lambda);
        }
        if self.alpha == 0.0 {
            return Err(Error::Config(
                "fold_alpha_into_lambda needs alpha > 0 (lambda / alpha is undefined)".into(),
            ));
        }
        Ok(self.lambda / self.alpha)
    }

    /// Encodes each waveform and pools both heads. Logit rows follow batch
    /// order.
    pub fn forward(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        batch: &[&[f64]],
        branch: SpeakerBranch,
    ) -> Result<ForwardOutput> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let len = batch[0].len();
        if let Some(other) = batch.iter().find(|w| w.len() != len) {
            return Err(Error::ShapeMismatch {
                op: "forward batch",
                left: vec![len],
                right: vec![other.len()],
            });
        }
        let spoof_cfg = self.spoof_head_config();
        let speaker_cfg = match branch {
            SpeakerBranch::Skip => None,
            _ => self.speaker_head_config(),
        };
        let mut spoof_rows = Vec::with_capacity(batch.len());
        let mut speaker_rows = Vec::with_capacity(batch.len());
        let mut spoof_embeddings = Vec::with_capacity(batch.len());
        for wave in batch {
            let stack = encode(tape, b, &self.model.encoder, wave)?;
            let spoof = mhfa_pool(tape, b, SPOOF_PREFIX, &spoof_cfg, &stack)?;
            spoof_rows.push(spoof.logits);
            spoof_embeddings.push(spoof.embedding);
            if let Some(cfg) = &speaker_cfg {
                let input = match branch {
                    SpeakerBranch::Reversal(lambda) => reverse_stack(tape, &stack, lambda),
                    _ => stack,
                };
                speaker_rows.push(mhfa_pool(tape, b, SPEAKER_PREFIX, cfg, &input)?.logits);
            }
        }
        let spoof_logits = tape.concat(&spoof_rows, 0)?;
        let speaker_logits = match speaker_cfg {
            Some(_) => Some(tape.concat(&speaker_rows, 0)?),
            None => None,
        };
        Ok(ForwardOutput {
            spoof_logits,
            speaker_logits,
            spoof_embeddings,
        })
    }

    /// Full-length, frozen forward of one utterance through the spoof head.
    pub fn infer(&self, waveform: &[f64]) -> Result<Inference> {
        let mut tape = Tape::new();
        let b = self.params.bind_frozen(&mut tape);
        let out = self.forward(&mut tape, &b, &[waveform], SpeakerBranch::Skip)?;
        let logits = tape.value(out.spoof_logits).data();
        let spoof_logits = [logits[BONAFIDE_CLASS], logits[SPOOF_CLASS]];
        let embedding = tape.value(out.spoof_embeddings[0]).data().to_vec();
        // log p(bonafide) - log p(spoof) equals the logit difference.
        Ok(Inference {
            score: spoof_logits[0] - spoof_logits[1],
            embedding,
            spoof_logits,
        })
    }

    /// Switches a speaker-aware network to speaker-invariant training,
    /// keeping every parameter group.
    pub fn into_speaker_invariant(mut self, lambda: f64) -> Result<Self> {
        if self.mode != Mode::SpeakerAware && self.mode != Mode::SpeakerInvariant {
            return Err(Error::Config(format!(
                "cannot warm-start ivspk from a {} network",
                self.mode
            )));
        }
        Mode::SpeakerInvariant.check_lambda(lambda)?;
        self.mode = Mode::SpeakerInvariant;
        self.lambda = lambda;
        Ok(self)
    }
}

fn reverse_stack(tape: &mut Tape, stack: &LayerStack, lambda: f64) -> LayerStack {
    LayerStack {
        layers: stack.layers.iter().map(|&l| tape.gradient_reversal(l, lambda)).collect(),
        frames: stack.frames,
        dim: stack.dim,
    }
}
