use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{Selection, TrainConfig};
use super::step::{train_step, Batch, StepConfig};
use crate::autodiff::Tape;
use crate::evaluation::compute_eer;
use crate::model::{copy_parameters, load_checkpoint, ModelConfig, SInMTNetwork, SpeakerBranch};
use crate::rng::{derive_seed, domain, rng_for};
use crate::synthdata::{augment, crop_or_pad, sample_augmentation, CorpusManifest, CropMode, Label, Split, Utterance};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub utt_id: String,
    pub waveform: Vec<f64>,
    pub label: Label,
    pub speaker_id: usize,
}

/// Train and dev utterances. Eval data never enters this type.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainData {
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    /// Speaker head class `k` is `speakers[k]`.
    pub speakers: Vec<usize>,
    pub sample_rate: f64,
}

impl TrainData {
    /// Reads only train and dev waveforms.
    pub fn load(manifest: &CorpusManifest, corpus_dir: &Path) -> Result<Self> {
        let read = |split| -> Result<Vec<Example>> {
            manifest
                .split(split)
                .map(|r| {
                    Ok(Example {
                        utt_id: r.utt_id.clone(),
                        waveform: manifest.load_waveform(corpus_dir, r)?,
                        label: r.label,
                        speaker_id: r.speaker_id,
                    })
                })
                .collect()
        };
        Ok(TrainData {
            train: read(Split::Train)?,
            dev: read(Split::Dev)?,
            speakers: manifest.training_speakers(),
            sample_rate: f64::from(manifest.sample_rate),
        })
    }

    pub fn from_utterances(utterances: &[Utterance], sample_rate: u32) -> Self {
        let pick = |split| -> Vec<Example> {
            utterances
                .iter()
                .filter(|u| u.record.split == split)
                .map(|u| Example {
                    utt_id: u.record.utt_id.clone(),
                    waveform: u.waveform.clone(),
                    label: u.record.label,
                    speaker_id: u.record.speaker_id,
                })
                .collect()
        };
        let train = pick(Split::Train);
        let dev = pick(Split::Dev);
        let mut speakers: Vec<usize> = train.iter().chain(&dev).map(|e| e.speaker_id).collect();
        speakers.sort_unstable();
        speakers.dedup();
        TrainData {
            train,
            dev,
            speakers,
            sample_rate: f64::from(sample_rate),
        }
    }

    fn speaker_class(&self, speaker_id: usize) -> Result<usize> {
        self.speakers
            .binary_search(&speaker_id)
            .map_err(|_| Error::Corpus(format!("speaker {speaker_id} is not a training speaker")))
    }

    /// `N / (2 N_c)` over the train split.
    pub fn inverse_frequency_weights(&self) -> Result<[f64; 2]> {
        let n = self.train.len() as f64;
        let mut counts = [0usize; 2];
        for e in &self.train {
            counts[e.label.class()] += 1;
        }
        if counts.contains(&0) {
            return Err(Error::Corpus(format!(
                "train split needs both classes, has {} bona fide and {} spoof",
                counts[Label::Bonafide.class()],
                counts[Label::Spoof.class()]
            )));
        }
        Ok(counts.map(|c| n / (2.0 * c as f64)))
    }
}

/// One per completed epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub spoof_loss: f64,
    pub speaker_loss: Option<f64>,
    pub total_loss: f64,
    pub dev_eer: f64,
    pub dev_spoof_loss: f64,
    pub dev_speaker_accuracy: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevMetrics {
    pub eer: f64,
    pub spoof_loss: f64,
    pub speaker_accuracy: Option<f64>,
}

impl DevMetrics {
    fn better_than(&self, other: &DevMetrics) -> bool {
        (self.eer, self.spoof_loss) < (other.eer, other.spoof_loss)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of `best_epoch`.
    pub best: SInMTNetwork,
    pub last: SInMTNetwork,
    pub best_epoch: usize,
    pub history: Vec<LossRecord>,
    /// Dev metrics before the first update.
    pub initial_dev: DevMetrics,
    pub selection: Selection,
}

impl TrainOutcome {
    pub fn selected(&self) -> &SInMTNetwork {
        match self.selection {
            Selection::BestDev => &self.best,
            Selection::Final => &self.last,
        }
    }
}

pub fn history_to_text(history: &[LossRecord]) -> String {
    let mut out = String::new();
    for r in history {
        let _ = writeln!(out, "{}", serde_json::to_string(r).expect("record serializes"));
    }
    out
}

pub fn parse_history(text: &str) -> Result<Vec<LossRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Config(format!("history line {}: {e}", i + 1))))
        .collect()
}

/// Frozen full-length pass over the dev split. The speaker head, when
/// present, sees the extractor output without reversal.
pub fn dev_metrics(net: &SInMTNetwork, dev: &[Example], speakers: &[usize], class_weights: &[f64; 2]) -> Result<DevMetrics> {
    let branch = if net.mode.has_speaker_head() {
        SpeakerBranch::Bypass
    } else {
        SpeakerBranch::Skip
    };
    let mut bona = Vec::new();
    let mut spoof = Vec::new();
    let (mut loss, mut weight) = (0.0, 0.0);
    let mut hits = 0usize;
    for e in dev {
        let mut tape = Tape::new();
        let b = net.params.bind_frozen(&mut tape);
        let out = net.forward(&mut tape, &b, &[&e.waveform], branch)?;
        let z = tape.value(out.spoof_logits).data();
        let y = e.label.class();
        let m = z[0].max(z[1]);
        let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
        loss += class_weights[y] * (lse - z[y]);
        weight += class_weights[y];
        let score = z[Label::Bonafide.class()] - z[Label::Spoof.class()];
        match e.label {
            Label::Bonafide => bona.push(score),
            Label::Spoof => spoof.push(score),
        }
        if let Some(s) = out.speaker_logits {
            let z = tape.value(s).data();
            let pred = (0..z.len()).max_by(|&a, &c| z[a].total_cmp(&z[c]).then(c.cmp(&a))).unwrap_or(0);
            if speakers.get(pred) == Some(&e.speaker_id) {
                hits += 1;
            }
        }
    }
    let eer = compute_eer(&bona, &spoof)
        .map_err(|e| Error::Corpus(format!("dev split cannot be scored: {e}")))?
        .eer;
    let spoof_loss = loss / weight;
    if !spoof_loss.is_finite() {
        return Err(Error::Diverged(format!("non-finite dev loss {spoof_loss}")));
    }
    Ok(DevMetrics {
        eer,
        spoof_loss,
        speaker_accuracy: branch_has_speaker(branch).then(|| hits as f64 / dev.len() as f64),
    })
}

fn branch_has_speaker(branch: SpeakerBranch) -> bool {
    !matches!(branch, SpeakerBranch::Skip)
}

/// Builds the network for `cfg`, warm-started from `cfg.init_checkpoint`
/// when set.
pub fn build_network(cfg: &TrainConfig, model: &ModelConfig, n_speakers: usize) -> Result<SInMTNetwork> {
    cfg.validate()?;
    let mut net = SInMTNetwork::new(model, cfg.mode, cfg.effective_lambda(), cfg.alpha, n_speakers, cfg.seed)?;
    if let Some(path) = &cfg.init_checkpoint {
        let init = load_checkpoint(path, Some(cfg.mode))?;
        if init.model != net.model {
            return Err(Error::Checkpoint(format!(
                "{} was trained with a different model configuration",
                path.display()
            )));
        }
        copy_parameters(&mut net.params, &init.params)?;
        log::info!("initialised {} parameters from {}", net.params.len(), path.display());
    }
    Ok(net)
}

fn epoch_batches(cfg: &TrainConfig, data: &TrainData, epoch: usize) -> Result<Vec<Batch>> {
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, domain::SHUFFLE, epoch as u64));
    let epoch_seed = derive_seed(cfg.seed, epoch as u64);
    let mut batches = Vec::new();
    for chunk in order.chunks(cfg.batch_size) {
        let mut waveforms = Vec::with_capacity(chunk.len());
        let mut spoof_labels = Vec::with_capacity(chunk.len());
        let mut speaker_labels = Vec::with_capacity(chunk.len());
        for &i in chunk {
            let e = &data.train[i];
            let crop_seed = derive_seed(derive_seed(epoch_seed, domain::CROP), i as u64);
            let mut clip = crop_or_pad(&e.waveform, cfg.clip_len, CropMode::RandomCrop(crop_seed))?;
            if cfg.augment {
                let mut rng = rng_for(epoch_seed, domain::AUGMENT, i as u64);
                let kind = sample_augmentation(&mut rng, cfg.p_no_augment);
                clip = augment(&clip, kind, rng.random(), data.sample_rate);
            }
            waveforms.push(clip);
            spoof_labels.push(e.label.class());
            speaker_labels.push(data.speaker_class(e.speaker_id)?);
        }
        batches.push(Batch {
            waveforms,
            spoof_labels,
            speaker_labels: cfg.mode.has_speaker_head().then_some(speaker_labels),
        });
    }
    Ok(batches)
}

/// Shuffle, crop, augment and step for each epoch; score the dev split after
/// each epoch and keep the best one.
pub fn train(cfg: &TrainConfig, model: &ModelConfig, data: &TrainData) -> Result<TrainOutcome> {
    if data.train.is_empty() {
        return Err(Error::Corpus("train split is empty".into()));
    }
    let class_weights = match cfg.class_weights {
        Some(w) => w,
        None => data.inverse_frequency_weights()?,
    };
    let mut net = build_network(cfg, model, data.speakers.len())?;
    let step_cfg = StepConfig {
        class_weights,
        fold_alpha_into_lambda: cfg.fold_alpha_into_lambda,
    };
    let mut opt = cfg.optimizer_state();
    let initial_dev = dev_metrics(&net, &data.dev, &data.speakers, &class_weights)?;
    log::info!("epoch 0: dev EER {:.4}", initial_dev.eer);

    let mut history: Vec<LossRecord> = Vec::new();
    let mut best: Option<(usize, DevMetrics, SInMTNetwork)> = None;
    for epoch in 1..=cfg.epochs {
        let (mut ls, mut ld, mut total) = (0.0, 0.0, 0.0);
        let n = data.train.len() as f64;
        for batch in epoch_batches(cfg, data, epoch)? {
            let rec = train_step(&mut net, &batch, &step_cfg, &mut opt)?;
            let w = batch.len() as f64 / n;
            ls += w * rec.spoof_loss;
            ld += w * rec.speaker_loss.unwrap_or(0.0);
            total += w * rec.total_loss;
        }
        let dev = dev_metrics(&net, &data.dev, &data.speakers, &class_weights)?;
        let record = LossRecord {
            epoch,
            spoof_loss: ls,
            speaker_loss: cfg.mode.has_speaker_head().then_some(ld),
            total_loss: total,
            dev_eer: dev.eer,
            dev_spoof_loss: dev.spoof_loss,
            dev_speaker_accuracy: dev.speaker_accuracy,
        };
        log::info!(
            "epoch {epoch}: Ls {:.4} Ld {:?} total {:.4} dev EER {:.4} dev Ls {:.4}",
            record.spoof_loss,
            record.speaker_loss,
            record.total_loss,
            record.dev_eer,
            record.dev_spoof_loss
        );
        history.push(record);
        if best.as_ref().is_none_or(|(_, m, _)| dev.better_than(m)) {
            best = Some((epoch, dev, net.clone()));
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.0);
        if cfg.patience > 0 && epoch - best_epoch >= cfg.patience {
            log::info!("early stop after epoch {epoch}; best epoch {best_epoch}");
            break;
        }
    }
    let (best_epoch, best) = match best {
        Some((e, _, n)) => (e, n),
        None => (0, net.clone()),
    };
    Ok(TrainOutcome {
        best,
        last: net,
        best_epoch,
        history,
        initial_dev,
        selection: cfg.selection,
    })
}

pub fn train_from_corpus(cfg: &TrainConfig, model: &ModelConfig, manifest: &CorpusManifest, corpus_dir: &Path) -> Result<TrainOutcome> {
    train(cfg, model, &TrainData::load(manifest, corpus_dir)?)
}
