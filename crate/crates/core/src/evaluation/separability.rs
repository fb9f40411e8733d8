use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{domain, rng_for};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            iterations: 500,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Held-out accuracy.
    pub accuracy: f64,
    pub n_speakers: usize,
    pub chance: f64,
    pub n_train: usize,
    pub n_test: usize,
    /// Speakers dropped for having fewer than two embeddings.
    pub excluded: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub probe_accuracy: f64,
    pub chance: f64,
    pub silhouette: f64,
    pub n_embeddings: usize,
    pub dim: usize,
    pub n_speakers: usize,
}

fn check_rows(embeddings: &[Vec<f64>], ids: &[usize]) -> Result<usize> {
    if embeddings.len() != ids.len() {
        return Err(Error::Evaluation(format!(
            "{} embeddings but {} speaker ids",
            embeddings.len(),
            ids.len()
        )));
    }
    let dim = embeddings.first().map_or(0, Vec::len);
    if embeddings.iter().any(|e| e.len() != dim) {
        return Err(Error::Evaluation("embeddings differ in dimension".into()));
    }
    if embeddings.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("non-finite embedding value".into()));
    }
    Ok(dim)
}

/// Multinomial logistic regression on frozen embeddings. Each speaker's
/// embeddings are shuffled (seed-pinned) and split in half; the probe is fit
/// by full-batch gradient descent on the first half, after standardising
/// with first-half statistics, and scored on the second.
pub fn speaker_probe(embeddings: &[Vec<f64>], speaker_ids: &[usize], cfg: &ProbeConfig) -> Result<ProbeResult> {
    let dim = check_rows(embeddings, speaker_ids)?;
    let mut by_speaker: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in speaker_ids.iter().enumerate() {
        by_speaker.entry(s).or_default().push(i);
    }
    let excluded: Vec<usize> = by_speaker.iter().filter(|(_, v)| v.len() < 2).map(|(&s, _)| s).collect();
    if !excluded.is_empty() {
        log::warn!("speaker probe: excluding {} speaker(s) with fewer than 2 embeddings", excluded.len());
    }
    by_speaker.retain(|_, v| v.len() >= 2);
    let k = by_speaker.len();
    if k == 0 {
        return Err(Error::Evaluation("speaker probe needs a speaker with at least 2 embeddings".into()));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, (&s, idx)) in by_speaker.iter().enumerate() {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng_for(cfg.seed, domain::PROBE, s as u64));
        let half = idx.len() / 2;
        train.extend(idx[..half].iter().map(|&i| (i, class)));
        test.extend(idx[half..].iter().map(|&i| (i, class)));
    }

    let mut mean = vec![0.0; dim];
    for &(i, _) in &train {
        mean.iter_mut().zip(&embeddings[i]).for_each(|(m, v)| *m += v / train.len() as f64);
    }
    let mut std = vec![0.0; dim];
    for &(i, _) in &train {
        std.iter_mut()
            .zip(embeddings[i].iter().zip(&mean))
            .for_each(|(s, (v, m))| *s += (v - m) * (v - m) / train.len() as f64);
    }
    let std: Vec<f64> = std.iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
    let standardize = |i: usize| -> Vec<f64> {
        embeddings[i].iter().zip(mean.iter().zip(&std)).map(|(v, (m, s))| (v - m) / s).collect()
    };
    let xs: Vec<(Vec<f64>, usize)> = train.iter().map(|&(i, c)| (standardize(i), c)).collect();

    let mut w = vec![0.0; dim * k];
    let mut b = vec![0.0; k];
    let logits = |w: &[f64], b: &[f64], x: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|c| b[c] + x.iter().enumerate().map(|(d, v)| v * w[d * k + c]).sum::<f64>())
            .collect()
    };
    let n = xs.len() as f64;
    for _ in 0..cfg.iterations {
        let mut gw = vec![0.0; dim * k];
        let mut gb = vec![0.0; k];
        for (x, y) in &xs {
            let z = logits(&w, &b, x);
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            for c in 0..k {
                let g = (e[c] / s - if c == *y { 1.0 } else { 0.0 }) / n;
                gb[c] += g;
                for d in 0..dim {
                    gw[d * k + c] += g * x[d];
                }
            }
        }
        w.iter_mut().zip(&gw).for_each(|(a, g)| *a -= cfg.learning_rate * g);
        b.iter_mut().zip(&gb).for_each(|(a, g)| *a -= cfg.learning_rate * g);
    }
    let correct = test
        .iter()
        .filter(|&&(i, y)| {
            let z = logits(&w, &b, &standardize(i));
            let pred = (0..k).max_by(|&a, &c| z[a].total_cmp(&z[c]).then(c.cmp(&a))).expect("k > 0");
            pred == y
        })
        .count();
    Ok(ProbeResult {
        accuracy: correct as f64 / test.len() as f64,
        n_speakers: k,
        chance: 1.0 / k as f64,
        n_train: train.len(),
        n_test: test.len(),
        excluded,
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette with Euclidean distance. A point whose intra- and nearest
/// inter-cluster mean distances are both zero scores 0.
pub fn silhouette(embeddings: &[Vec<f64>], speaker_ids: &[usize]) -> Result<f64> {
    check_rows(embeddings, speaker_ids)?;
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in speaker_ids.iter().enumerate() {
        clusters.entry(s).or_default().push(i);
    }
    if clusters.len() < 2 || clusters.values().any(|c| c.len() < 2) {
        return Err(Error::Evaluation(
            "silhouette needs at least 2 speakers with at least 2 embeddings each".into(),
        ));
    }
    let m = embeddings.len();
    let mut dist = vec![0.0; m * m];
    for i in 0..m {
        for j in i + 1..m {
            let d = distance(&embeddings[i], &embeddings[j]);
            dist[i * m + j] = d;
            dist[j * m + i] = d;
        }
    }
    let mut total = 0.0;
    for i in 0..m {
        let own = speaker_ids[i];
        let mean_to = |members: &[usize], skip_self: bool| {
            let n = members.len() - usize::from(skip_self);
            members.iter().map(|&j| dist[i * m + j]).sum::<f64>() / n as f64
        };
        let a = mean_to(&clusters[&own], true);
        let b = clusters
            .iter()
            .filter(|(&s, _)| s != own)
            .map(|(_, members)| mean_to(members, false))
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        total += if denom == 0.0 { 0.0 } else { (b - a) / denom };
    }
    Ok(total / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn planted(n_speakers: usize, per: usize, dim: usize, separation: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f64>> = (0..n_speakers)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let mut e = Vec::new();
        let mut ids = Vec::new();
        for (s, c) in centers.iter().enumerate() {
            for _ in 0..per {
                e.push(c.iter().map(|v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    separation * v + z
                }).collect());
                ids.push(s + 1);
            }
        }
        (e, ids)
    }

    #[test]
    fn one_hot_codes_are_probed_perfectly() {
        let mut e = Vec::new();
        let mut ids = Vec::new();
        for s in 0..20 {
            for _ in 0..6 {
                let mut v = vec![0.0; 20];
                v[s] = 1.0;
                e.push(v);
                ids.push(s + 1);
            }
        }
        let r = speaker_probe(&e, &ids, &ProbeConfig::default()).unwrap();
        assert!(r.accuracy >= 0.99, "{}", r.accuracy);
        assert_eq!(r.chance, 0.05);
    }

    #[test]
    fn noise_probes_near_chance() {
        let mut total = 0.0;
        for seed in 0..10 {
            let (e, ids) = planted(20, 20, 16, 0.0, seed);
            let r = speaker_probe(&e, &ids, &ProbeConfig { seed, ..ProbeConfig::default() }).unwrap();
            total += r.accuracy;
        }
        let mean = total / 10.0;
        assert!((0.025..=0.1).contains(&mean), "mean accuracy {mean}");
    }

    #[test]
    fn single_speaker_is_trivial() {
        let e = vec![vec![0.3, 1.0], vec![-2.0, 0.1], vec![0.0, 0.0]];
        let r = speaker_probe(&e, &[4, 4, 4], &ProbeConfig::default()).unwrap();
        assert_eq!(r.accuracy, 1.0);
        let r = speaker_probe(&e, &[4, 4, 5], &ProbeConfig::default()).unwrap();
        assert_eq!(r.excluded, vec![5]);
    }

    #[test]
    fn silhouette_limits() {
        let e = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![10.0, 0.0], vec![10.0, 0.0]];
        assert_eq!(silhouette(&e, &[1, 1, 2, 2]).unwrap(), 1.0);
        let same = vec![vec![1.0, 1.0]; 4];
        assert_eq!(silhouette(&same, &[1, 1, 2, 2]).unwrap(), 0.0);
        assert!(silhouette(&e, &[1, 1, 1, 2]).is_err());
    }

    #[test]
    fn permuted_labels_give_near_zero_silhouette() {
        for seed in 0..10 {
            let (e, mut ids) = planted(4, 60, 8, 2.0, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            ids.shuffle(&mut rng);
            let s = silhouette(&e, &ids).unwrap();
            assert!(s.abs() < 0.1, "seed {seed}: {s}");
        }
    }

    #[test]
    fn metrics_grow_with_planted_separation() {
        let mut last = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for sep in [0.3, 1.0, 3.0] {
            let (e, ids) = planted(8, 12, 6, sep, 42);
            let s = silhouette(&e, &ids).unwrap();
            let p = speaker_probe(&e, &ids, &ProbeConfig::default()).unwrap().accuracy;
            assert!(s > last.0 && p > last.1, "sep {sep}: silhouette {s}, probe {p}");
            last = (s, p);
        }
    }
}
