use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dsp::{convolve, normalize_peak, rms};
use super::speaker::{synthesize_bonafide, SpeakerProfile, PEAK};
use crate::rng::{domain, rng_for};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentKind {
    None,
    Reverb,
    Speech,
    Music,
    Noise,
}

impl AugmentKind {
    pub const ACTIVE: [AugmentKind; 4] = [
        AugmentKind::Reverb,
        AugmentKind::Speech,
        AugmentKind::Music,
        AugmentKind::Noise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AugmentKind::None => "none",
            AugmentKind::Reverb => "reverb",
            AugmentKind::Speech => "speech",
            AugmentKind::Music => "music",
            AugmentKind::Noise => "noise",
        }
    }
}

impl fmt::Display for AugmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AugmentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [AugmentKind::None]
            .into_iter()
            .chain(AugmentKind::ACTIVE)
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown augmentation `{s}`")))
    }
}

/// Picks `None` with probability `p_none`, otherwise one of the four active
/// kinds uniformly.
pub fn sample_augmentation(rng: &mut ChaCha8Rng, p_none: f64) -> AugmentKind {
    if rng.random::<f64>() < p_none {
        AugmentKind::None
    } else {
        AugmentKind::ACTIVE[rng.random_range(0..AugmentKind::ACTIVE.len())]
    }
}

/// Every random quantity an augmentation needs, drawn up front.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentPlan {
    pub kind: AugmentKind,
    /// Target signal-to-interferer ratio for additive kinds.
    pub snr_db: f64,
    /// Time for the reverb envelope to fall by 60 dB.
    pub decay_ms: f64,
    /// Seed for interferer and impulse-response content.
    pub content_seed: u64,
}

pub fn plan_augmentation(kind: AugmentKind, aug_seed: u64) -> AugmentPlan {
    let mut rng = rng_for(aug_seed, domain::AUGMENT, 0);
    let snr_db = match kind {
        AugmentKind::Speech | AugmentKind::Music => rng.random_range(5.0..15.0),
        AugmentKind::Noise => rng.random_range(0.0..15.0),
        _ => f64::INFINITY,
    };
    let decay_ms = match kind {
        AugmentKind::Reverb => rng.random_range(50.0..200.0),
        _ => 0.0,
    };
    AugmentPlan {
        kind,
        snr_db,
        decay_ms,
        content_seed: rng.random(),
    }
}

/// `signal + g * interferer` with `g` set so the mix has exactly `snr_db`.
pub fn mix_at_snr(signal: &[f64], interferer: &[f64], snr_db: f64) -> Vec<f64> {
    let target = rms(signal) / 10f64.powf(snr_db / 20.0);
    let g = target / rms(interferer).max(1e-300);
    signal.iter().zip(interferer).map(|(s, n)| s + g * n).collect()
}

pub fn reverb_impulse_response(decay_ms: f64, sample_rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = ((decay_ms / 1000.0) * sample_rate).ceil().max(1.0) as usize;
    let rate = 60.0 / 20.0 * std::f64::consts::LN_10 / len as f64;
    let mut h: Vec<f64> = (0..len)
        .map(|k| {
            let z: f64 = StandardNormal.sample(rng);
            (-rate * k as f64).exp() * z
        })
        .collect();
    h[0] = 1.0;
    let energy = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter_mut().for_each(|v| *v /= energy);
    h
}

fn chord(n: usize, sample_rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let root = rng.random_range(150.0..600.0);
    let tones: Vec<(f64, f64)> = [1.0, 1.25, 1.5]
        .iter()
        .map(|r| (root * r, rng.random_range(0.0..2.0 * PI)))
        .collect();
    (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate;
            tones.iter().map(|(f, p)| (2.0 * PI * f * t + p).sin()).sum()
        })
        .collect()
}

/// Executes a plan. The output has the input's length and a 0.9 peak unless
/// the kind is `None`, which returns the input unchanged.
pub fn apply_augmentation(waveform: &[f64], plan: &AugmentPlan, sample_rate: f64) -> Vec<f64> {
    let n = waveform.len();
    let mut rng = rng_for(plan.content_seed, domain::AUGMENT, 1);
    let mut out = match plan.kind {
        AugmentKind::None => return waveform.to_vec(),
        AugmentKind::Reverb => {
            let h = reverb_impulse_response(plan.decay_ms, sample_rate, &mut rng);
            let mut y = convolve(waveform, &h);
            y.truncate(n);
            y
        }
        AugmentKind::Speech => {
            let other = SpeakerProfile::sample(0, &mut rng);
            let speech = synthesize_bonafide(&other, rng.random(), n, sample_rate);
            mix_at_snr(waveform, &speech, plan.snr_db)
        }
        AugmentKind::Music => {
            let music = chord(n, sample_rate, &mut rng);
            mix_at_snr(waveform, &music, plan.snr_db)
        }
        AugmentKind::Noise => {
            let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            mix_at_snr(waveform, &noise, plan.snr_db)
        }
    };
    normalize_peak(&mut out, PEAK);
    out
}

pub fn augment(waveform: &[f64], kind: AugmentKind, aug_seed: u64, sample_rate: f64) -> Vec<f64> {
    apply_augmentation(waveform, &plan_augmentation(kind, aug_seed), sample_rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CropMode {
    RandomCrop(u64),
    Full,
}

/// Random crop when longer than `target_len`, cyclic repetition when
/// shorter; `Full` returns the input untouched.
pub fn crop_or_pad(waveform: &[f64], target_len: usize, mode: CropMode) -> Result<Vec<f64>> {
    let seed = match mode {
        CropMode::Full => return Ok(waveform.to_vec()),
        CropMode::RandomCrop(seed) => seed,
    };
    if target_len == 0 {
        return Err(Error::Config("crop target length must be positive".into()));
    }
    if waveform.is_empty() {
        return Err(Error::Corpus("cannot crop an empty waveform".into()));
    }
    let n = waveform.len();
    if n == target_len {
        return Ok(waveform.to_vec());
    }
    if n < target_len {
        return Ok(waveform.iter().cycle().take(target_len).copied().collect());
    }
    let mut rng = rng_for(seed, domain::CROP, 0);
    let start = rng.random_range(0..=n - target_len);
    Ok(waveform[start..start + target_len].to_vec())
}
