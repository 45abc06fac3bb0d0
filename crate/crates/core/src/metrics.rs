//! Confusion-matrix metrics and ROC AUC.
//!
//! Labels follow the table encoding (`1` benign, `0` malicious). Which label
//! counts as the positive condition is an explicit argument; the default
//! reporting convention treats malicious flows as positive.

use serde::{Deserialize, Serialize};

use crate::dataio::{BENIGN, MALICIOUS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositiveClass {
    #[default]
    Malicious,
    Benign,
}

impl PositiveClass {
    pub fn label(self) -> u8 {
        match self {
            PositiveClass::Malicious => MALICIOUS,
            PositiveClass::Benign => BENIGN,
        }
    }

    /// Score for this class given the model's benign probability.
    pub fn score<T: Scalar>(self, benign_probability: T) -> T {
        match self {
            PositiveClass::Malicious => T::one() - benign_probability,
            PositiveClass::Benign => benign_probability,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// True positive rate.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// False positive rate.
    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }

    /// Harmonic mean of precision and recall, computed from the counts as
    /// `2tp / (2tp + fp + fn)` so that it is correctly rounded.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

fn check_lengths(labels: &[u8], n_scores: usize) -> Result<()> {
    if labels.len() != n_scores {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: n_scores,
        });
    }
    Ok(())
}

/// Tallies predictions: a sample is predicted positive iff its
/// positive-class score is at least `threshold`.
pub fn confusion<T: Scalar>(
    labels: &[u8],
    scores: &[T],
    threshold: f64,
    positive_label: u8,
) -> Result<ConfusionMatrix> {
    check_lengths(labels, scores.len())?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut cm = ConfusionMatrix::default();
    for (&label, &score) in labels.iter().zip(scores) {
        let predicted = score.as_f64() >= threshold;
        match (label == positive_label, predicted) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fn_ += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

fn class_sizes(labels: &[u8], positive_label: u8) -> Result<(u64, u64)> {
    let pos = labels.iter().filter(|&&l| l == positive_label).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Area under the ROC curve traced by descending score thresholds, by the
/// trapezoidal rule. Tied scores form one threshold step (a diagonal segment).
pub fn roc_auc_trapezoid<T: Scalar>(labels: &[u8], scores: &[T], positive_label: u8) -> Result<f64> {
    check_lengths(labels, scores.len())?;
    let (pos, neg) = class_sizes(labels, positive_label)?;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[b].as_f64().total_cmp(&scores[a].as_f64()));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area2 = 0u128;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]].as_f64();
        let (tp_prev, fp_prev) = (tp, fp);
        while i < order.len() && scores[order[i]].as_f64() == s {
            if labels[order[i]] == positive_label {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += ((fp - fp_prev) as u128) * ((tp + tp_prev) as u128);
    }
    Ok(area2 as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Mann-Whitney U statistic normalized to `[0, 1]`, with mid-ranks for ties.
pub fn roc_auc_rank<T: Scalar>(labels: &[u8], scores: &[T], positive_label: u8) -> Result<f64> {
    check_lengths(labels, scores.len())?;
    let (pos, neg) = class_sizes(labels, positive_label)?;
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[a].as_f64().total_cmp(&scores[b].as_f64()));
    // Twice the rank sum keeps mid-ranks integral.
    let mut rank_sum2 = 0u128;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]].as_f64();
        let mut j = i;
        while j < order.len() && scores[order[j]].as_f64() == s {
            j += 1;
        }
        // Ranks i+1..=j share the mid-rank (i + 1 + j) / 2.
        let mid2 = (i + 1 + j) as u128;
        let n_pos = order[i..j].iter().filter(|&&k| labels[k] == positive_label).count() as u128;
        rank_sum2 += mid2 * n_pos;
        i = j;
    }
    let u2 = rank_sum2 - (pos as u128) * (pos as u128 + 1);
    Ok(u2 as f64 / (2.0 * pos as f64 * neg as f64))
}

/// ROC AUC of positive-class scores. The trapezoidal and rank formulations
/// are both computed and must agree to within `1e-12`.
pub fn roc_auc<T: Scalar>(labels: &[u8], scores: &[T], positive_label: u8) -> Result<f64> {
    let trapezoid = roc_auc_trapezoid(labels, scores, positive_label)?;
    let rank = roc_auc_rank(labels, scores, positive_label)?;
    if (trapezoid - rank).abs() > 1e-12 {
        return Err(Error::NonFinite(format!(
            "AUC formulations disagree: {trapezoid} vs {rank}"
        )));
    }
    Ok(trapezoid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClassReport {
    pub benign: ClassReport,
    pub attack: ClassReport,
}

/// Full evaluation from benign-class probabilities.
pub fn evaluate<T: Scalar>(
    labels: &[u8],
    benign_probabilities: &[T],
    threshold: f64,
    positive: PositiveClass,
) -> Result<(EvaluationReport, PerClassReport, ConfusionMatrix)> {
    let class_report = |class: PositiveClass| -> Result<(ClassReport, ConfusionMatrix)> {
        let scores: Vec<T> = benign_probabilities.iter().map(|&p| class.score(p)).collect();
        let cm = confusion(labels, &scores, threshold, class.label())?;
        Ok((
            ClassReport {
                precision: cm.precision(),
                recall: cm.recall(),
                f1: cm.f1(),
                support: cm.tp + cm.fn_,
            },
            cm,
        ))
    };
    let (benign, _) = class_report(PositiveClass::Benign)?;
    let (attack, _) = class_report(PositiveClass::Malicious)?;
    let (_, cm) = class_report(positive)?;
    let scores: Vec<T> = benign_probabilities.iter().map(|&p| positive.score(p)).collect();
    let auc = roc_auc(labels, &scores, positive.label())?;
    Ok((
        EvaluationReport {
            accuracy: cm.accuracy(),
            precision: cm.precision(),
            recall: cm.recall(),
            f1: cm.f1(),
            auc,
        },
        PerClassReport { benign, attack },
        cm,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const POS: u8 = MALICIOUS;
    const NEG: u8 = BENIGN;

    #[test]
    fn tallies() {
        let labels = [POS, POS, NEG, NEG];
        let scores = [0.9, 0.4, 0.2, 0.6];
        let cm = confusion(&labels, &scores, 0.5, POS).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, fn_: 1, tn: 1, fp: 1 });
        let all = confusion(&labels, &scores, 0.0, POS).unwrap();
        assert_eq!((all.fn_, all.tn), (0, 0));
        let none = confusion(&labels, &scores, 1.0, POS).unwrap();
        assert_eq!((none.tp, none.fp), (0, 0));
        assert!(confusion(&labels, &scores[..3], 0.5, POS).is_err());
    }

    #[test]
    fn rates() {
        let cm = ConfusionMatrix { tp: 99, fn_: 1, fp: 1, tn: 99 };
        assert!((cm.precision() - 0.99).abs() < 1e-15);
        assert!((cm.recall() - 0.99).abs() < 1e-15);
        assert!((cm.f1() - 0.99).abs() < 1e-15);
        assert!((cm.accuracy() - 0.99).abs() < 1e-15);
        assert!((cm.fpr() - 0.01).abs() < 1e-15);

        let empty = ConfusionMatrix { tp: 0, fp: 0, tn: 5, fn_: 3 };
        assert_eq!(empty.precision(), 0.0);
        assert_eq!(empty.f1(), 0.0);

        let perfect = ConfusionMatrix { tp: 50, tn: 50, fp: 0, fn_: 0 };
        for v in [perfect.precision(), perfect.recall(), perfect.f1(), perfect.accuracy()] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(perfect.fpr(), 0.0);
    }

    #[test]
    fn auc_cases() {
        let labels = [POS, POS, NEG, NEG];
        assert_eq!(roc_auc(&labels, &[0.9, 0.8, 0.2, 0.1], POS).unwrap(), 1.0);
        assert_eq!(roc_auc(&labels, &[0.5; 4], POS).unwrap(), 0.5);
        let labels = [POS, NEG, POS, NEG];
        assert_eq!(roc_auc(&labels, &[0.8, 0.7, 0.6, 0.1], POS).unwrap(), 0.75);
        assert!(matches!(roc_auc(&[POS, POS], &[0.1, 0.2], POS), Err(Error::SingleClass)));
    }

    #[test]
    fn flipped_labels_complement() {
        let labels = [POS, NEG, POS, NEG, NEG];
        let scores = [0.8, 0.7, 0.6, 0.1, 0.65];
        let a = roc_auc(&labels, &scores, POS).unwrap();
        let b = roc_auc(&labels, &scores, NEG).unwrap();
        assert!((a + b - 1.0).abs() < 1e-15);
    }

    #[test]
    fn evaluation_report() {
        let labels = [BENIGN, BENIGN, MALICIOUS, MALICIOUS];
        let probs = [0.9, 0.8, 0.1, 0.6];
        let (report, per_class, cm) = evaluate(&labels, &probs, 0.5, PositiveClass::Malicious).unwrap();
        // Malicious scores: 0.1, 0.2, 0.9, 0.4 -> one attack missed.
        assert_eq!(cm, ConfusionMatrix { tp: 1, fn_: 1, tn: 2, fp: 0 });
        assert_eq!(report.accuracy, 0.75);
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 0.5);
        assert_eq!(report.auc, 1.0);
        assert_eq!(per_class.attack.support, 2);
        assert_eq!(per_class.benign.recall, 1.0);
        assert!((per_class.benign.precision - 2.0 / 3.0).abs() < 1e-15);
        let json = serde_json::to_value(report).unwrap();
        for key in ["accuracy", "precision", "recall", "f1", "auc"] {
            assert!(json.get(key).is_some());
        }
    }
}
