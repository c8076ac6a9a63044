use serde::{Deserialize, Serialize};

use super::Region;
use crate::error::{Error, Result};

/// Regions whose value is strictly below the nearest-rank `q`-th percentile
/// of `values`. A single region is compared with `alpha` instead
/// (`value <= alpha`), since it can never lie below itself.
pub fn percentile_select(values: &[f64], q: f64, alpha: f64) -> Vec<bool> {
    match values.len() {
        0 => Vec::new(),
        1 => vec![values[0] <= alpha],
        n => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let rank = ((q / 100.0) * n as f64).ceil().clamp(1.0, n as f64) as usize;
            let threshold = sorted[rank - 1];
            values.iter().map(|&v| v < threshold).collect()
        }
    }
}

/// Fraction of `signal`'s pixels inside `region`.
pub fn containment(region: &Region, signal: &Region) -> f64 {
    region.overlap(signal) as f64 / signal.area() as f64
}

/// Ground truth for `regions`: positive when it holds at least 80% of some
/// signal. `None` when a signal has no such region (the sample is dropped
/// from scoring).
pub fn region_truth(regions: &[Region], signals: &[Region]) -> Option<Vec<bool>> {
    const CONTAINED: f64 = 0.8;
    let mut truth = vec![false; regions.len()];
    for s in signals {
        let mut placed = false;
        for (t, r) in truth.iter_mut().zip(regions) {
            if containment(r, s) >= CONTAINED {
                *t = true;
                placed = true;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(truth)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Micro-averaged precision, recall and F1 over region-level decisions.
///
/// Precision is 0 when nothing is selected.
pub fn precision_f1(selected: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<RetrievalScores> {
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (s, t) in selected.iter().zip(truth) {
        for (&a, &b) in s.iter().zip(t) {
            match (a, b) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
    }
    if tp + fneg == 0 {
        return Err(Error::UndefinedRecall);
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = tp as f64 / (tp + fneg) as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(RetrievalScores {
        precision,
        recall,
        f1,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
    })
}
