use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    /// Fraction in `[0, 1]`.
    pub eer: f64,
    /// Scores at or above this are accepted as bona fide.
    pub threshold: f64,
}

/// Equal error rate of a detector whose higher scores mean bona fide.
///
/// Thresholds are swept over the midpoints between consecutive unique scores
/// plus one point below and one above all scores. FAR(t) is the fraction of
/// spoof scores `>= t`, FRR(t) the fraction of bona fide scores `< t`. The
/// EER is read off the straight line between the two adjacent operating
/// points where FAR - FRR changes sign. The crossing is computed from integer
/// counts, so any strictly increasing transform of the scores leaves the EER
/// unchanged bit for bit.
pub fn compute_eer(bonafide: &[f64], spoof: &[f64]) -> Result<EerResult> {
    if bonafide.is_empty() || spoof.is_empty() {
        return Err(Error::Evaluation(format!(
            "EER needs both classes, got {} bona fide and {} spoof trials",
            bonafide.len(),
            spoof.len()
        )));
    }
    if let Some(s) = bonafide.iter().chain(spoof).find(|s| !s.is_finite()) {
        return Err(Error::Evaluation(format!("non-finite score {s}")));
    }
    let mut trials: Vec<(f64, bool)> = bonafide
        .iter()
        .map(|&s| (s, true))
        .chain(spoof.iter().map(|&s| (s, false)))
        .collect();
    trials.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_bona = bonafide.len() as i128;
    let n_spoof = spoof.len() as i128;

    // Operating point k sits between group k-1 and group k of equal scores.
    // accepted_spoof = spoof trials >= t, rejected_bona = bona fide trials < t.
    let scale = (trials[trials.len() - 1].0 - trials[0].0).abs().max(1.0);
    let mut prev = (n_spoof, 0i128, trials[0].0 - scale);
    let mut i = 0;
    while i < trials.len() {
        let score = trials[i].0;
        let (mut acc, mut rej) = (prev.0, prev.1);
        while i < trials.len() && trials[i].0 == score {
            if trials[i].1 {
                rej += 1;
            } else {
                acc -= 1;
            }
            i += 1;
        }
        let threshold = if i < trials.len() {
            0.5 * (score + trials[i].0)
        } else {
            score + scale
        };
        let cur = (acc, rej, threshold);
        let d_prev = prev.0 * n_bona - prev.1 * n_spoof;
        let d_cur = cur.0 * n_bona - cur.1 * n_spoof;
        if d_cur == 0 {
            return Ok(EerResult {
                eer: cur.0 as f64 / n_spoof as f64,
                threshold: cur.2,
            });
        }
        if d_cur < 0 {
            // d_prev > 0 here: the previous point was checked and was positive.
            let span = d_prev - d_cur;
            let num = prev.0 * span + d_prev * (cur.0 - prev.0);
            let den = n_spoof * span;
            let w = d_prev as f64 / span as f64;
            return Ok(EerResult {
                eer: num as f64 / den as f64,
                threshold: prev.2 + w * (cur.2 - prev.2),
            });
        }
        prev = cur;
    }
    unreachable!("FAR - FRR ends at -1")
}
