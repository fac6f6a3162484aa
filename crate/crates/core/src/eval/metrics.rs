use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::dataset::{PairSample, Prediction, Side};
use super::EvalError;
use crate::agents::SampleVerdict;

/// Rounds a rate to four decimal places.
pub fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

fn lookup<'a>(
    preds: &'a [Prediction],
) -> HashMap<(&'a str, Side), SampleVerdict> {
    preds
        .iter()
        .map(|p| ((p.sample_id.as_str(), p.target), p.verdict))
        .collect()
}

fn verdict_of(
    table: &HashMap<(&str, Side), SampleVerdict>,
    pair: &PairSample,
    side: Side,
) -> Result<bool, EvalError> {
    table
        .get(&(pair.pair_id.as_str(), side))
        .map(|v| *v == SampleVerdict::Vulnerable)
        .ok_or_else(|| EvalError::MissingPrediction {
            pair_id: pair.pair_id.clone(),
            side,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseCounts {
    pub n_pairs: usize,
    pub pc_count: usize,
    pub pr_count: usize,
    pub vps_count: i64,
    pub pc_rate: f64,
}

impl PairwiseCounts {
    pub fn from_counts(n_pairs: usize, pc_count: usize, pr_count: usize) -> Self {
        PairwiseCounts {
            n_pairs,
            pc_count,
            pr_count,
            vps_count: pc_count as i64 - pr_count as i64,
            pc_rate: if n_pairs == 0 {
                0.0
            } else {
                pc_count as f64 / n_pairs as f64
            },
        }
    }
}

pub fn pairwise_metrics(preds: &[Prediction], pairs: &[PairSample]) -> Result<PairwiseCounts, EvalError> {
    let table = lookup(preds);
    let (mut pc, mut pr) = (0, 0);
    for pair in pairs {
        let v = verdict_of(&table, pair, Side::VulnSide)?;
        let p = verdict_of(&table, pair, Side::PatchSide)?;
        match (v, p) {
            (true, false) => pc += 1,
            (false, true) => pr += 1,
            _ => {}
        }
    }
    Ok(PairwiseCounts::from_counts(pairs.len(), pc, pr))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardMetrics {
    pub accuracy: f64,
    pub precision: f64,
    /// Set when there were no positive predictions.
    pub precision_degenerate: bool,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub specificity: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> StandardMetrics {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let negatives = self.fp + self.tn;
        let fpr = ratio(self.fp, negatives);
        StandardMetrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            precision,
            precision_degenerate: self.tp + self.fp == 0,
            recall,
            f1,
            fpr,
            specificity: 1.0 - fpr,
        }
    }
}

/// Confusion matrix over both sides of every pair; the patched side is the
/// negative class.
pub fn confusion(preds: &[Prediction], pairs: &[PairSample]) -> Result<Confusion, EvalError> {
    let table = lookup(preds);
    let mut c = Confusion::default();
    for pair in pairs {
        for side in Side::BOTH {
            let predicted = verdict_of(&table, pair, side)?;
            match (side.is_vulnerable(), predicted) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(c)
}

pub fn standard_metrics(preds: &[Prediction], pairs: &[PairSample]) -> Result<StandardMetrics, EvalError> {
    Ok(confusion(preds, pairs)?.metrics())
}
