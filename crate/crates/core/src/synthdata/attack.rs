use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::dsp::{fft_real, ifft, normalize_peak, rms};
use super::speaker::{SpeakerProfile, FILTER_TAPS, PEAK};
use crate::rng::{domain, rng_for};
use crate::{Error, Result};

pub const BONAFIDE_ID: &str = "bonafide";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackKind {
    /// Frame-wise phase re-randomisation, magnitudes kept.
    PhaseRandomize { frame_len: usize },
    /// Second pass through perturbed copies of the speaker filter, redrawn
    /// every `frame_len` samples.
    FilterMismatch { perturbation: f64, frame_len: usize },
    /// Uniform full-scale quantisation to `2^bits` levels at the speaker's
    /// nominal level.
    BitCrush { bits: u32 },
    /// Additive sinusoid at `level_db` relative to the signal RMS.
    ArtifactTone { freq_hz: f64, level_db: f64 },
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::PhaseRandomize { .. } => "phase_randomize",
            AttackKind::FilterMismatch { .. } => "filter_mismatch",
            AttackKind::BitCrush { .. } => "bit_crush",
            AttackKind::ArtifactTone { .. } => "artifact_tone",
        }
    }

    /// Default parameters for a kind name.
    pub fn default_for(name: &str) -> Result<Self> {
        match name {
            "phase_randomize" => Ok(AttackKind::PhaseRandomize { frame_len: 64 }),
            "filter_mismatch" => Ok(AttackKind::FilterMismatch {
                perturbation: 1.0,
                frame_len: 64,
            }),
            "bit_crush" => Ok(AttackKind::BitCrush { bits: 6 }),
            "artifact_tone" => Ok(AttackKind::ArtifactTone {
                freq_hz: 1450.0,
                level_db: -25.0,
            }),
            other => Err(Error::Corpus(format!("unknown attack kind `{other}`"))),
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::default_for(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub attack_id: String,
    #[serde(flatten)]
    pub kind: AttackKind,
}

impl AttackSpec {
    pub fn new(attack_id: impl Into<String>, kind: AttackKind) -> Self {
        AttackSpec {
            attack_id: attack_id.into(),
            kind,
        }
    }

    /// A01..A04 in the order phase, filter, bit-crush, tone.
    pub fn defaults() -> Vec<AttackSpec> {
        ["phase_randomize", "filter_mismatch", "bit_crush", "artifact_tone"]
            .iter()
            .enumerate()
            .map(|(i, k)| AttackSpec::new(format!("A{:02}", i + 1), AttackKind::default_for(k).expect("known")))
            .collect()
    }
}

/// Replaces the phase of every bin in each frame with a random one, keeping
/// DC and Nyquist real. The tail shorter than a frame is its own frame.
pub fn phase_randomize(x: &[f64], frame_len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for frame in x.chunks(frame_len.max(2)) {
        let n = frame.len();
        let spec = fft_real(frame);
        let mut new = vec![Complex64::new(0.0, 0.0); n];
        new[0] = Complex64::new(spec[0].re, 0.0);
        for k in 1..n.div_ceil(2) {
            let phase = rng.random_range(0.0..2.0 * PI);
            new[k] = Complex64::from_polar(spec[k].norm(), phase);
            new[n - k] = new[k].conj();
        }
        if n % 2 == 0 {
            new[n / 2] = Complex64::new(spec[n / 2].norm() * spec[n / 2].re.signum(), 0.0);
        }
        out.extend(ifft(&new).iter().map(|c| c.re / n as f64));
    }
    out
}

/// Quantises onto `2^bits` evenly spaced levels spanning `[-1, 1]`;
/// samples outside are clipped.
pub fn bit_crush(x: &[f64], bits: u32) -> Vec<f64> {
    let steps = ((1u64 << bits) - 1) as f64;
    let step = 2.0 / steps;
    x.iter()
        .map(|&v| {
            let q = ((v + 1.0) / step).round().clamp(0.0, steps);
            -1.0 + q * step
        })
        .collect()
}

/// Time-varying FIR: each `frame_len` block of output uses its own
/// perturbed speaker filter, with history carried across blocks.
pub fn framewise_mismatch(
    x: &[f64],
    profile: &SpeakerProfile,
    perturbation: f64,
    frame_len: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let frame_len = frame_len.max(1);
    let mut out = Vec::with_capacity(x.len());
    let mut taps = perturbed_filter(profile, perturbation, rng);
    for n in 0..x.len() {
        if n > 0 && n % frame_len == 0 {
            taps = perturbed_filter(profile, perturbation, rng);
        }
        let y: f64 = taps.iter().enumerate().take(n + 1).map(|(k, h)| h * x[n - k]).sum();
        out.push(y);
    }
    out
}

/// Zero-phase tone added at `level_db` below the input RMS.
pub fn add_tone(x: &[f64], freq_hz: f64, level_db: f64, sample_rate: f64) -> Vec<f64> {
    let amp = std::f64::consts::SQRT_2 * rms(x) * 10f64.powf(level_db / 20.0);
    x.iter()
        .enumerate()
        .map(|(n, v)| v + amp * (2.0 * PI * freq_hz * n as f64 / sample_rate).sin())
        .collect()
}

/// Speaker filter with every tap perturbed by Gaussian noise of relative
/// scale `perturbation`, renormalised to unit energy.
pub fn perturbed_filter(profile: &SpeakerProfile, perturbation: f64, rng: &mut ChaCha8Rng) -> [f64; FILTER_TAPS] {
    let mut taps = profile.filter;
    for h in taps.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *h += perturbation * z / (FILTER_TAPS as f64).sqrt();
    }
    let energy = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
    for h in taps.iter_mut() {
        *h /= energy;
    }
    taps
}

/// Applies `spec` to a bona fide waveform and renormalises the peak.
pub fn apply_attack(
    waveform: &[f64],
    spec: &AttackSpec,
    profile: &SpeakerProfile,
    utt_seed: u64,
    sample_rate: f64,
) -> Result<Vec<f64>> {
    if spec.attack_id == BONAFIDE_ID {
        return Err(Error::Corpus("apply_attack called with the bonafide id".into()));
    }
    let mut rng = rng_for(utt_seed, domain::ATTACK, 0);
    let mut out = match spec.kind {
        AttackKind::PhaseRandomize { frame_len } => phase_randomize(waveform, frame_len, &mut rng),
        AttackKind::FilterMismatch {
            perturbation,
            frame_len,
        } => framewise_mismatch(waveform, profile, perturbation, frame_len, &mut rng),
        AttackKind::BitCrush { bits } => {
            if !(1..=24).contains(&bits) {
                return Err(Error::Corpus(format!("bit_crush bits must be in 1..=24, got {bits}")));
            }
            let r = rms(waveform);
            let gain = if r > 0.0 { profile.level / r } else { 1.0 };
            let scaled: Vec<f64> = waveform.iter().map(|v| v * gain).collect();
            bit_crush(&scaled, bits)
        }
        AttackKind::ArtifactTone { freq_hz, level_db } => add_tone(waveform, freq_hz, level_db, sample_rate),
    };
    normalize_peak(&mut out, PEAK);
    Ok(out)
}
