use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dsp::{fir_filter, normalize_peak, rms};
use crate::rng::{domain, rng_for};

pub const FILTER_TAPS: usize = 8;
pub const N_HARMONICS: usize = 4;
pub const PEAK: f64 = 0.9;
/// Level of the additive white noise relative to the filtered source.
pub const NOISE_DB: f64 = -30.0;

/// Synthetic voice: a harmonic source shaped by a short spectral filter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    pub speaker_id: usize,
    pub f0: f64,
    pub filter: [f64; FILTER_TAPS],
    pub harmonic_amps: [f64; N_HARMONICS],
    /// RMS of the source before peak normalisation.
    pub level: f64,
}

impl SpeakerProfile {
    /// Profile of `speaker_id` in the corpus keyed by `corpus_seed`.
    pub fn new(corpus_seed: u64, speaker_id: usize) -> Self {
        let mut rng = rng_for(corpus_seed, domain::SPEAKER, speaker_id as u64);
        Self::sample(speaker_id, &mut rng)
    }

    pub fn sample(speaker_id: usize, rng: &mut ChaCha8Rng) -> Self {
        let f0 = rng.random_range(80.0..300.0);
        let mut filter = [0.0; FILTER_TAPS];
        filter[0] = 1.0;
        for h in filter.iter_mut().skip(1) {
            let z: f64 = StandardNormal.sample(rng);
            *h = 0.6 * z;
        }
        let energy = filter.iter().map(|h| h * h).sum::<f64>().sqrt();
        for h in filter.iter_mut() {
            *h /= energy;
        }
        let mut harmonic_amps = [0.0; N_HARMONICS];
        for a in harmonic_amps.iter_mut() {
            *a = rng.random_range(0.2..1.0);
        }
        SpeakerProfile {
            speaker_id,
            f0,
            filter,
            harmonic_amps,
            level: rng.random_range(0.05..0.15),
        }
    }
}

/// Harmonic source at a slightly jittered f0 with a slow random envelope,
/// filtered by the speaker filter, plus white noise, peak-normalised.
pub fn synthesize_bonafide(profile: &SpeakerProfile, utt_seed: u64, n_samples: usize, sample_rate: f64) -> Vec<f64> {
    let mut rng = rng_for(utt_seed, domain::UTTERANCE, profile.speaker_id as u64);
    let f0 = profile.f0 * (1.0 + rng.random_range(-0.015..0.015));
    let phases: Vec<f64> = (0..N_HARMONICS).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let modulators: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.05..0.3),
                rng.random_range(0.5..4.0),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect();

    let source: Vec<f64> = (0..n_samples)
        .map(|n| {
            let t = n as f64 / sample_rate;
            let env = 1.0
                + modulators
                    .iter()
                    .map(|(depth, rate, phase)| depth * (2.0 * PI * rate * t + phase).sin())
                    .sum::<f64>();
            let voiced: f64 = (0..N_HARMONICS)
                .map(|k| profile.harmonic_amps[k] * (2.0 * PI * (k + 1) as f64 * f0 * t + phases[k]).sin())
                .sum();
            env * voiced
        })
        .collect();
    let mut out = fir_filter(&source, &profile.filter);
    let gain = profile.level / rms(&out).max(1e-12);
    let sigma = profile.level * 10f64.powf(NOISE_DB / 20.0);
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = *v * gain + sigma * z;
    }
    normalize_peak(&mut out, PEAK);
    out
}
