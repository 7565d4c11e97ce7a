//! ROC curves, AUC, EER and threshold metrics.
//!
//! The genuine user is the positive class throughout: the false accept rate
//! is the ROC false positive rate and the false reject rate is `1 - TPR`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// Staircase from (0, 0) to (1, 1), one vertex per distinct score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Schema(format!("{} scores but {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config("scores must be finite".into()));
    }
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels("ROC analysis needs both classes".into()));
    }
    Ok((pos, neg))
}

/// Sweep the threshold down through the distinct scores. Tied scores form a
/// single step, so a tie between classes yields a diagonal segment.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
    }
    Ok(RocCurve { points })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve.points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) * 0.5).sum::<f64>().clamp(0.0, 1.0)
}

/// Rate at which false accepts equal false rejects, interpolating linearly
/// along the segment where `FAR - FRR` changes sign.
pub fn eer(curve: &RocCurve) -> f64 {
    let diff = |p: &RocPoint| p.fpr - (1.0 - p.tpr);
    for w in curve.points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (da, db) = (diff(a), diff(b));
        if da <= 0.0 && db >= 0.0 {
            if db == da {
                return a.fpr;
            }
            let t = -da / (db - da);
            return (a.fpr + t * (b.fpr - a.fpr)).clamp(0.0, 1.0);
        }
    }
    // Unreachable for curves from `roc_curve`, which start at diff = -1 and
    // end at diff = +1.
    0.5
}

impl RocCurve {
    /// Highest TPR attained at false positive rate `fpr`, linearly
    /// interpolated within sloped segments.
    pub fn tpr_at(&self, fpr: f64) -> f64 {
        let mut best: f64 = 0.0;
        for w in self.points.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if fpr < a.fpr || fpr > b.fpr {
                continue;
            }
            let v = if b.fpr == a.fpr {
                a.tpr.max(b.tpr)
            } else {
                a.tpr + (fpr - a.fpr) / (b.fpr - a.fpr) * (b.tpr - a.tpr)
            };
            best = best.max(v);
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub accuracy: f64,
    pub f1: f64,
}

/// Accuracy and genuine-class F1 with `score >= threshold` as an accept.
pub fn point_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<PointMetrics> {
    class_counts(scores, labels)?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / scores.len() as f64;
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = tp as f64 / (tp + fn_) as f64;
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(PointMetrics { accuracy, f1 })
}
