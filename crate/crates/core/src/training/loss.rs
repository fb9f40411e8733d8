use crate::autodiff::{Tape, Var};
use crate::{Error, Result};

/// Weight-normalised cross-entropy:
/// `-(sum_i w[y_i] log softmax(logits_i)[y_i]) / sum_i w[y_i]`.
pub fn weighted_cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize], weights: &[f64]) -> Result<Var> {
    let shape = tape.shape(logits).to_vec();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "weighted_cross_entropy",
            left: shape,
            right: vec![labels.len()],
        });
    }
    let classes = shape[1];
    if weights.len() != classes {
        return Err(Error::Config(format!(
            "{} class weights for {classes} classes",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Config("class weights must be finite and non-negative".into()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let total: f64 = labels.iter().map(|&l| weights[l]).sum();
    if total <= 0.0 {
        return Err(Error::Config("class weights of the batch labels sum to zero".into()));
    }
    let coeffs: Vec<f64> = labels.iter().map(|&l| weights[l] / total).collect();
    tape.cross_entropy(logits, labels, &coeffs)
}

/// Unweighted batch-mean cross-entropy.
pub fn mean_cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let classes = tape.shape(logits).get(1).copied().unwrap_or(0);
    weighted_cross_entropy(tape, logits, labels, &vec![1.0; classes])
}

#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub total: Var,
    pub spoof: Var,
    pub speaker: Option<Var>,
}

/// `Ls + alpha * Ld`, or `Ls` alone when there is no speaker branch. Any
/// gradient reversal lives inside the graph that produced `speaker_logits`.
pub fn combined_loss(
    tape: &mut Tape,
    spoof_logits: Var,
    speaker_logits: Option<Var>,
    spoof_labels: &[usize],
    speaker_labels: Option<&[usize]>,
    class_weights: &[f64],
    alpha: f64,
) -> Result<LossParts> {
    let spoof = weighted_cross_entropy(tape, spoof_logits, spoof_labels, class_weights)?;
    let Some(logits) = speaker_logits else {
        return Ok(LossParts {
            total: spoof,
            spoof,
            speaker: None,
        });
    };
    let labels = speaker_labels.ok_or_else(|| Error::Config("speaker labels missing for the speaker branch".into()))?;
    let speaker = mean_cross_entropy(tape, logits, labels)?;
    let weighted = tape.scale(speaker, alpha);
    let total = tape.add(spoof, weighted)?;
    Ok(LossParts {
        total,
        spoof,
        speaker: Some(speaker),
    })
}
