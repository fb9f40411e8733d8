use std::fmt::Write as _;
use std::path::Path;

use super::report::{ScoreSet, Trial};
use super::separability::{silhouette, speaker_probe, ProbeConfig, SeparabilityReport};
use crate::model::SInMTNetwork;
use crate::synthdata::{CorpusManifest, Label, Split};
use crate::{Error, Result};

const HEADER: &str = "# utt_id,speaker_id,label,attack_id,e0..";

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub utt_id: String,
    pub speaker_id: usize,
    pub label: Label,
    pub attack_id: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EmbeddingSet {
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingSet {
    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.values.len())
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.values.clone()).collect()
    }

    pub fn speaker_ids(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.speaker_id).collect()
    }

    /// Comma-separated rows, values with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{}", r.utt_id, r.speaker_id, r.label, r.attack_id);
            for v in &r.values {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| Error::Evaluation(format!("embedding file line {}: {m}", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 4 {
                return Err(bad("expected at least 4 fields"));
            }
            let values = f[4..]
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| bad("bad value")))
                .collect::<Result<Vec<_>>>()?;
            rows.push(EmbeddingRow {
                utt_id: f[0].to_string(),
                speaker_id: f[1].parse().map_err(|_| bad("bad speaker id"))?,
                label: f[2].parse()?,
                attack_id: f[3].to_string(),
                values,
            });
        }
        Ok(EmbeddingSet { rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Full-length scores and spoof-head embeddings for every utterance of a
/// split, in manifest order.
pub fn score_split(
    net: &SInMTNetwork,
    manifest: &CorpusManifest,
    corpus_dir: &Path,
    split: Split,
) -> Result<(ScoreSet, EmbeddingSet)> {
    let mut scores = ScoreSet::default();
    let mut embeddings = EmbeddingSet::default();
    for r in manifest.split(split) {
        let wave = manifest.load_waveform(corpus_dir, r)?;
        let inf = net.infer(&wave)?;
        if !inf.score.is_finite() {
            return Err(Error::Diverged(format!("non-finite score for {}", r.utt_id)));
        }
        scores.trials.push(Trial {
            utt_id: r.utt_id.clone(),
            score: inf.score,
            label: r.label,
            attack_id: r.attack_id.clone(),
            speaker_id: r.speaker_id,
        });
        embeddings.rows.push(EmbeddingRow {
            utt_id: r.utt_id.clone(),
            speaker_id: r.speaker_id,
            label: r.label,
            attack_id: r.attack_id.clone(),
            values: inf.embedding,
        });
    }
    if scores.trials.is_empty() {
        return Err(Error::Evaluation(format!("{split} split is empty")));
    }
    Ok((scores, embeddings))
}

pub fn export_embeddings(net: &SInMTNetwork, manifest: &CorpusManifest, corpus_dir: &Path, split: Split) -> Result<EmbeddingSet> {
    score_split(net, manifest, corpus_dir, split).map(|(_, e)| e)
}

pub fn separability(set: &EmbeddingSet, probe: &ProbeConfig) -> Result<SeparabilityReport> {
    let x = set.matrix();
    let ids = set.speaker_ids();
    let p = speaker_probe(&x, &ids, probe)?;
    Ok(SeparabilityReport {
        probe_accuracy: p.accuracy,
        chance: p.chance,
        silhouette: silhouette(&x, &ids)?,
        n_embeddings: x.len(),
        dim: set.dim(),
        n_speakers: p.n_speakers,
    })
}
