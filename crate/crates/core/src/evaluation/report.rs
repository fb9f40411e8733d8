use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::eer::compute_eer;
use crate::synthdata::{Label, BONAFIDE_ID};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub utt_id: String,
    /// Higher means more bona fide.
    pub score: f64,
    pub label: Label,
    pub attack_id: String,
    pub speaker_id: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub trials: Vec<Trial>,
}

impl ScoreSet {
    pub fn bonafide_scores(&self) -> Vec<f64> {
        self.scores_where(|t| t.label == Label::Bonafide)
    }

    pub fn spoof_scores(&self) -> Vec<f64> {
        self.scores_where(|t| t.label == Label::Spoof)
    }

    fn scores_where(&self, keep: impl Fn(&Trial) -> bool) -> Vec<f64> {
        self.trials.iter().filter(|t| keep(t)).map(|t| t.score).collect()
    }

    /// Tab-separated `utt_id score label attack_id speaker_id`, scores with 17
    /// significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.trials {
            writeln!(
                out,
                "{}\t{:.16e}\t{}\t{}\t{}",
                t.utt_id, t.score, t.label, t.attack_id, t.speaker_id
            )
            .expect("write to String");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut trials = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| Error::Evaluation(format!("score file line {}: {m}", i + 1));
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 5 {
                return Err(bad("expected 5 tab-separated fields"));
            }
            trials.push(Trial {
                utt_id: f[0].to_string(),
                score: f[1].parse().map_err(|_| bad("bad score"))?,
                label: f[2].parse()?,
                attack_id: f[3].to_string(),
                speaker_id: f[4].parse().map_err(|_| bad("bad speaker id"))?,
            });
        }
        Ok(ScoreSet { trials })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub eer: f64,
    pub threshold: f64,
    pub n_bonafide: usize,
    pub n_spoof: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// One entry per attack, each scored against every bona fide trial.
    pub per_attack: BTreeMap<String, ConditionResult>,
    /// EER over the union of all trials.
    pub pooled: ConditionResult,
    /// Arithmetic mean of the per-attack EERs.
    pub mean_eer: f64,
    /// Expected attacks that had no trials.
    pub omitted: Vec<String>,
}

pub fn mean_eer(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Evaluation("mean of zero conditions".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// `100 * (baseline - new) / baseline`.
pub fn relative_reduction(baseline_eer: f64, new_eer: f64) -> Result<f64> {
    if !(baseline_eer > 0.0) {
        return Err(Error::Evaluation(format!(
            "relative reduction needs a positive baseline, got {baseline_eer}"
        )));
    }
    Ok(100.0 * (baseline_eer - new_eer) / baseline_eer)
}

fn condition(bona: &[f64], spoof: &[f64]) -> Result<ConditionResult> {
    let r = compute_eer(bona, spoof)?;
    Ok(ConditionResult {
        eer: r.eer,
        threshold: r.threshold,
        n_bonafide: bona.len(),
        n_spoof: spoof.len(),
    })
}

pub fn breakdown_report(scores: &ScoreSet) -> Result<EvalReport> {
    breakdown_report_expecting(scores, &[])
}

/// Like [`breakdown_report`]; attacks in `expected` without trials are listed
/// in `omitted`.
pub fn breakdown_report_expecting(scores: &ScoreSet, expected: &[String]) -> Result<EvalReport> {
    let bona = scores.bonafide_scores();
    let mut by_attack: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in scores.trials.iter().filter(|t| t.label == Label::Spoof) {
        by_attack.entry(t.attack_id.clone()).or_default().push(t.score);
    }
    let mut per_attack = BTreeMap::new();
    for (attack, spoof) in &by_attack {
        per_attack.insert(attack.clone(), condition(&bona, spoof)?);
    }
    let omitted: Vec<String> = expected
        .iter()
        .filter(|a| a.as_str() != BONAFIDE_ID && !by_attack.contains_key(*a))
        .cloned()
        .collect();
    if !omitted.is_empty() {
        log::warn!("{} attack(s) without trials omitted: {}", omitted.len(), omitted.join(", "));
    }
    let pooled = condition(&bona, &scores.spoof_scores())?;
    let eers: Vec<f64> = per_attack.values().map(|c: &ConditionResult| c.eer).collect();
    Ok(EvalReport {
        per_attack,
        pooled,
        mean_eer: mean_eer(&eers)?,
        omitted,
    })
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>10} {:>8} {:>9}", "condition", "bonafide", "spoof", "EER(%)");
        for (attack, c) in &self.per_attack {
            let _ = writeln!(out, "{:<10} {:>10} {:>8} {:>9.3}", attack, c.n_bonafide, c.n_spoof, 100.0 * c.eer);
        }
        let p = &self.pooled;
        let _ = writeln!(out, "{:<10} {:>10} {:>8} {:>9.3}", "pooled", p.n_bonafide, p.n_spoof, 100.0 * p.eer);
        let _ = writeln!(out, "{:<10} {:>10} {:>8} {:>9.3}", "mean", "", "", 100.0 * self.mean_eer);
        for a in &self.omitted {
            let _ = writeln!(out, "omitted: {a} (no trials)");
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(id: &str, score: f64, attack: &str) -> Trial {
        Trial {
            utt_id: id.into(),
            score,
            label: if attack == BONAFIDE_ID { Label::Bonafide } else { Label::Spoof },
            attack_id: attack.into(),
            speaker_id: 1,
        }
    }

    #[test]
    fn single_attack_pooled_equals_attack() {
        let s = ScoreSet {
            trials: vec![
                trial("a", 0.9, BONAFIDE_ID),
                trial("b", 0.3, BONAFIDE_ID),
                trial("c", 0.5, "A01"),
                trial("d", 0.1, "A01"),
            ],
        };
        let r = breakdown_report(&s).unwrap();
        assert_eq!(r.per_attack["A01"], r.pooled);
        assert_eq!(r.mean_eer, r.pooled.eer);
    }

    #[test]
    fn attacks_share_bonafide_trials() {
        let s = ScoreSet {
            trials: vec![
                trial("a", 0.9, BONAFIDE_ID),
                trial("b", 0.8, BONAFIDE_ID),
                trial("c", 0.1, "A01"),
                trial("d", 0.85, "A02"),
            ],
        };
        let r = breakdown_report_expecting(&s, &["A01".into(), "A02".into(), "A03".into()]).unwrap();
        assert_eq!(r.per_attack["A01"].n_bonafide, 2);
        assert_eq!(r.per_attack["A02"].n_bonafide, 2);
        assert_eq!(r.per_attack["A01"].eer, 0.0);
        assert_eq!(r.omitted, vec!["A03".to_string()]);
        let table = r.to_table();
        assert!(table.contains("A02") && table.contains("pooled") && table.contains("mean"));
    }

    #[test]
    fn score_file_round_trip() {
        let s = ScoreSet {
            trials: vec![trial("x", 0.1 + 0.2, BONAFIDE_ID), trial("y", -1.0 / 3.0, "A04")],
        };
        let text = s.to_text();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(ScoreSet::parse(&text).unwrap(), s);
    }

    #[test]
    fn reduction_arithmetic() {
        assert_eq!(relative_reduction(4.0, 4.0).unwrap(), 0.0);
        assert!((relative_reduction(7.41, 6.13).unwrap() - 17.27).abs() < 0.01);
        assert!(relative_reduction(0.0, 1.0).is_err());
    }
}
