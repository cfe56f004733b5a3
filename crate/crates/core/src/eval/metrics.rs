use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TRIM: f64 = 0.3;

/// Sorts, drops `floor(trim·n)` values from each end and averages the rest.
/// Falls back to the plain mean when nothing would remain.
pub fn aggregate_segment(sample_probs: &[f64], trim: f64) -> Result<f64> {
    if sample_probs.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty list of sample probabilities"));
    }
    if !(0.0..=0.5).contains(&trim) {
        return Err(Error::Config(format!("trim fraction must be in [0, 0.5], got {trim}")));
    }
    let mut v = sample_probs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let cut = (trim * n as f64).floor() as usize;
    let kept = if 2 * cut < n { &v[cut..n - cut] } else { &v[..] };
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    /// `None` when there are no positives.
    pub sensitivity: Option<f64>,
    /// `None` when there are no negatives.
    pub specificity: Option<f64>,
}

/// PD (label 1) is the positive class.
pub fn confusion_from_predictions(predicted: &[u8], labels: &[u8]) -> Result<Classification> {
    if predicted.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: predicted.len() });
    }
    if labels.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let mut c = ConfusionMatrix::default();
    for (&p, &l) in predicted.iter().zip(labels) {
        match (p, l) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    Ok(Classification {
        confusion: c,
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        sensitivity: ratio(c.tp, c.fn_),
        specificity: ratio(c.tn, c.fp),
    })
}

/// Calls PD when `score > threshold`.
pub fn confusion_and_accuracy(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Classification> {
    let predicted: Vec<u8> = scores.iter().map(|&s| u8::from(s > threshold)).collect();
    confusion_from_predictions(&predicted, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores at or above this value are called PD; `None` for the origin.
    pub threshold: Option<f64>,
    pub fpr: f64,
    pub tpr: f64,
}

/// Mann–Whitney AUC (ties count one half) and the ROC curve swept over the
/// distinct scores from high to low.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<(f64, Vec<RocPoint>)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: scores.len() });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::invalid(format!("score {i} is NaN")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("AUC needs both classes among the labels"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // walk tie groups from the highest score; each positive beats every
    // negative in later groups and ties with negatives in its own group
    let mut twice_wins: u128 = 0;
    let mut neg_below = neg as u128;
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut roc = vec![RocPoint { threshold: None, fpr: 0.0, tpr: 0.0 }];
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut j = i;
        let (mut gp, mut gn) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == s {
            if labels[order[j]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        neg_below -= gn as u128;
        twice_wins += gp as u128 * (2 * neg_below + gn as u128);
        tp += gp;
        fp += gn;
        roc.push(RocPoint { threshold: Some(s), fpr: fp as f64 / neg as f64, tpr: tp as f64 / pos as f64 });
        i = j;
    }
    let auc = twice_wins as f64 / (2 * pos as u128 * neg as u128) as f64;
    Ok((auc, roc))
}

/// Area under a piecewise-linear ROC curve.
pub fn trapezoid_area(roc: &[RocPoint]) -> f64 {
    roc.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
}
