use serde::{Deserialize, Serialize};

use crate::data::{AnomalyKind, AnomalySpan};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl DetectionMetrics {
    fn from_counts(tp: usize, fp: usize, fn_: usize, threshold: f64) -> Self {
        let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            threshold,
            tp,
            fp,
            fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Mark a whole labeled segment detected when any of its slots is.
    /// Inflates scores; for comparison only.
    pub point_adjust: bool,
}

fn check(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    Ok(())
}

fn adjust(pred: &mut [bool], labels: &[u8]) {
    let mut i = 0;
    while i < labels.len() {
        if labels[i] == 1 {
            let start = i;
            while i < labels.len() && labels[i] == 1 {
                i += 1;
            }
            if pred[start..i].iter().any(|&p| p) {
                pred[start..i].iter_mut().for_each(|p| *p = true);
            }
        } else {
            i += 1;
        }
    }
}

/// Slot-wise metrics with `score > threshold` as a positive call.
pub fn prf1(scores: &[f64], labels: &[u8], threshold: f64) -> Result<DetectionMetrics> {
    prf1_with(scores, labels, threshold, EvalOptions::default())
}

pub fn prf1_with(scores: &[f64], labels: &[u8], threshold: f64, opts: EvalOptions) -> Result<DetectionMetrics> {
    check(scores, labels)?;
    let mut pred: Vec<bool> = scores.iter().map(|&s| s > threshold).collect();
    if opts.point_adjust {
        adjust(&mut pred, labels);
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &l) in pred.iter().zip(labels) {
        match (p, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok(DetectionMetrics::from_counts(tp, fp, fn_, threshold))
}

/// Candidate thresholds: one below the minimum, then every midpoint between
/// consecutive distinct scores.
fn candidates(scores: &[f64]) -> Vec<f64> {
    let mut u: Vec<f64> = scores.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    let mut c = Vec::with_capacity(u.len());
    c.push(u[0] - 1.0);
    c.extend(u.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    c
}

/// Exhaustive threshold scan maximizing F1; ties go to the lower threshold.
pub fn best_f1_threshold(scores: &[f64], labels: &[u8]) -> Result<DetectionMetrics> {
    best_f1_threshold_with(scores, labels, EvalOptions::default())
}

pub fn best_f1_threshold_with(scores: &[f64], labels: &[u8], opts: EvalOptions) -> Result<DetectionMetrics> {
    check(scores, labels)?;
    if !labels.contains(&1) {
        return Err(Error::NoPositives);
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("scores"));
    }
    let mut best: Option<DetectionMetrics> = None;
    if opts.point_adjust {
        for c in candidates(scores) {
            let m = prf1_with(scores, labels, c, opts)?;
            if best.is_none_or(|b| m.f1 > b.f1) {
                best = Some(m);
            }
        }
        return Ok(best.expect("at least one candidate"));
    }

    // Sorted sweep: moving the threshold past a distinct value turns all
    // slots holding that value negative.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    let total_neg = labels.len() - total_pos;
    let (mut tp, mut fp) = (total_pos, total_neg);
    let mut i = 0;
    let cands = candidates(scores);
    for (k, &c) in cands.iter().enumerate() {
        if k > 0 {
            let v = scores[order[i]];
            while i < order.len() && scores[order[i]] == v {
                if labels[order[i]] == 1 {
                    tp -= 1;
                } else {
                    fp -= 1;
                }
                i += 1;
            }
        }
        let m = DetectionMetrics::from_counts(tp, fp, total_pos - tp, c);
        if best.is_none_or(|b| m.f1 > b.f1) {
            best = Some(m);
        }
    }
    // Recount at the chosen threshold so the reported metrics always agree
    // with plain thresholding.
    prf1(scores, labels, best.expect("at least one candidate").threshold)
}

/// Metrics for one anomaly kind, or a marker when that kind has no slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum KindMetrics {
    Metrics(DetectionMetrics),
    NoPositives,
}

impl KindMetrics {
    pub fn metrics(&self) -> Option<&DetectionMetrics> {
        match self {
            KindMetrics::Metrics(m) => Some(m),
            KindMetrics::NoPositives => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerKindMetrics {
    pub contextual: KindMetrics,
    pub point: KindMetrics,
}

/// Per-kind metrics at a fixed threshold. Slots of the other kind are left
/// out; clean slots are shared negatives. `spans` use indices relative to
/// `scores`.
pub fn per_kind_metrics(scores: &[f64], spans: &[AnomalySpan], threshold: f64) -> Result<PerKindMetrics> {
    let n = scores.len();
    let mut kind = vec![None; n];
    for sp in spans {
        if sp.end > n {
            return Err(Error::InvalidInput(format!("span {sp:?} exceeds {n} scores")));
        }
        kind[sp.start..sp.end].iter_mut().for_each(|k| *k = Some(sp.kind));
    }
    let one = |target: AnomalyKind| -> Result<KindMetrics> {
        let (s, l): (Vec<f64>, Vec<u8>) = scores
            .iter()
            .zip(&kind)
            .filter(|(_, k)| k.is_none() || **k == Some(target))
            .map(|(&s, k)| (s, u8::from(k.is_some())))
            .unzip();
        if !l.contains(&1) {
            return Ok(KindMetrics::NoPositives);
        }
        Ok(KindMetrics::Metrics(prf1(&s, &l, threshold)?))
    };
    Ok(PerKindMetrics {
        contextual: one(AnomalyKind::Contextual)?,
        point: one(AnomalyKind::Point)?,
    })
}
