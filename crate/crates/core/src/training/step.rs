use crate::autodiff::{GradMap, OptimizerState, Tape};
use crate::model::{SInMTNetwork, SpeakerBranch};
use crate::{Error, Result};

use super::loss::combined_loss;

/// Equal-length clips with their labels. `speaker_labels` are head class
/// indices (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub waveforms: Vec<Vec<f64>>,
    pub spoof_labels: Vec<usize>,
    pub speaker_labels: Option<Vec<usize>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.waveforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waveforms.is_empty()
    }
}

/// Loss options that do not live on the network.
#[derive(Clone, Debug, PartialEq)]
pub struct StepConfig {
    pub class_weights: [f64; 2],
    pub fold_alpha_into_lambda: bool,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            class_weights: [1.0, 1.0],
            fold_alpha_into_lambda: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub spoof_loss: f64,
    pub speaker_loss: Option<f64>,
    pub total_loss: f64,
}

/// One forward and backward pass. `branch` overrides the network's own GRL
/// wiring when given.
pub fn compute_gradients(
    net: &SInMTNetwork,
    batch: &Batch,
    cfg: &StepConfig,
    branch: Option<SpeakerBranch>,
) -> Result<(StepRecord, GradMap)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    if batch.spoof_labels.len() != batch.len() {
        return Err(Error::Config("spoof label count differs from batch size".into()));
    }
    let branch = match branch {
        Some(b) => b,
        None if net.mode.has_speaker_head() => SpeakerBranch::Reversal(net.grl_coefficient(cfg.fold_alpha_into_lambda)?),
        None => SpeakerBranch::Skip,
    };
    if let (Some(labels), true) = (&batch.speaker_labels, net.n_speakers > 0) {
        if let Some(&label) = labels.iter().find(|&&l| l >= net.n_speakers) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: net.n_speakers,
            });
        }
    }
    let mut tape = Tape::new();
    let b = net.params.bind(&mut tape);
    let views: Vec<&[f64]> = batch.waveforms.iter().map(Vec::as_slice).collect();
    let out = net.forward(&mut tape, &b, &views, branch)?;
    let parts = combined_loss(
        &mut tape,
        out.spoof_logits,
        out.speaker_logits,
        &batch.spoof_labels,
        batch.speaker_labels.as_deref(),
        &cfg.class_weights,
        net.alpha,
    )?;
    let record = StepRecord {
        spoof_loss: tape.value(parts.spoof).item()?,
        speaker_loss: parts.speaker.map(|v| tape.value(v).item()).transpose()?,
        total_loss: tape.value(parts.total).item()?,
    };
    if !record.total_loss.is_finite() {
        return Err(Error::Diverged(format!(
            "non-finite loss (Ls = {}, Ld = {:?})",
            record.spoof_loss, record.speaker_loss
        )));
    }
    let grads = b.gradients(&tape.backward(parts.total)?);
    Ok((record, grads))
}

/// Forward through the reversal node, backward, NaN check, update.
pub fn train_step(net: &mut SInMTNetwork, batch: &Batch, cfg: &StepConfig, opt: &mut OptimizerState) -> Result<StepRecord> {
    let (record, grads) = compute_gradients(net, batch, cfg, None)?;
    if let Some(name) = grads.first_non_finite() {
        return Err(Error::Diverged(format!("non-finite gradient for `{name}`")));
    }
    opt.step(&mut net.params, &grads)?;
    if !net.params.is_finite() {
        return Err(Error::Diverged("parameters became non-finite".into()));
    }
    Ok(record)
}
