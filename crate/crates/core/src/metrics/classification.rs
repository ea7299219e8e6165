use serde::{Deserialize, Serialize};

use crate::detect::Verdict;
use crate::error::{Error, Result};
use crate::ingest::Label;

/// Counts with abnormal as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::Abnormal, Label::Abnormal) => self.tp += 1,
            (Label::Abnormal, Label::Normal) => self.fp += 1,
            (Label::Normal, Label::Normal) => self.tn += 1,
            (Label::Normal, Label::Abnormal) => self.fn_ += 1,
        }
    }
}

pub fn confusion_from_labels(predicted: &[Label], actual: &[Label]) -> Result<ConfusionMatrix> {
    if predicted.len() != actual.len() {
        return Err(Error::LengthMismatch(predicted.len(), actual.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &a) in predicted.iter().zip(actual) {
        cm.add(p, a);
    }
    Ok(cm)
}

pub fn confusion(predictions: &[Verdict], labels: &[Label]) -> Result<ConfusionMatrix> {
    let predicted: Vec<Label> = predictions.iter().map(|v| v.flagged).collect();
    confusion_from_labels(&predicted, labels)
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn precision(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.tp as f64, (cm.tp + cm.fp) as f64).0
}

pub fn recall(cm: &ConfusionMatrix) -> f64 {
    ratio(cm.tp as f64, (cm.tp + cm.fn_) as f64).0
}

pub fn f1(cm: &ConfusionMatrix) -> f64 {
    let (p, r) = (precision(cm), recall(cm));
    ratio(2.0 * p * r, p + r).0
}

pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let (tp, fp, tn, fn_) = (cm.tp as f64, cm.fp as f64, cm.tn as f64, cm.fn_ as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    ratio(tp * tn - fp * fn_, den).0
}

/// All four scores plus which of them hit a zero denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: ConfusionMatrix,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    /// Names of metrics whose denominator was zero (reported as 0).
    pub degenerate: Vec<String>,
}

pub fn classification_report(cm: &ConfusionMatrix) -> ClassificationReport {
    let mut degenerate = Vec::new();
    if cm.tp + cm.fp == 0 {
        degenerate.push("precision".to_string());
    }
    if cm.tp + cm.fn_ == 0 {
        degenerate.push("recall".to_string());
    }
    if precision(cm) + recall(cm) == 0.0 {
        degenerate.push("f1".to_string());
    }
    if (cm.tp + cm.fp) * (cm.tp + cm.fn_) * (cm.tn + cm.fp) * (cm.tn + cm.fn_) == 0 {
        degenerate.push("mcc".to_string());
    }
    ClassificationReport {
        confusion: *cm,
        precision: precision(cm),
        recall: recall(cm),
        f1: f1(cm),
        mcc: mcc(cm),
        degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_counts() {
        let actual: Vec<Label> = [Label::Abnormal; 4].into_iter().chain([Label::Normal; 6]).collect();
        assert_eq!(confusion_from_labels(&actual, &actual).unwrap(), ConfusionMatrix::new(4, 0, 6, 0));
        let all_abn = vec![Label::Abnormal; 10];
        assert_eq!(confusion_from_labels(&all_abn, &actual).unwrap(), ConfusionMatrix::new(4, 6, 0, 0));
        assert_eq!(confusion_from_labels(&[], &[]).unwrap(), ConfusionMatrix::default());
        assert!(matches!(confusion_from_labels(&all_abn, &actual[..3]), Err(Error::LengthMismatch(10, 3))));
    }

    #[test]
    fn formula_examples() {
        let cm = ConfusionMatrix::new(8, 2, 0, 2);
        assert!((precision(&cm) - 0.8).abs() < 1e-12);
        assert!((recall(&cm) - 0.8).abs() < 1e-12);
        assert!((f1(&cm) - 0.8).abs() < 1e-12);
        let perfect = ConfusionMatrix::new(5, 0, 7, 0);
        assert_eq!((precision(&perfect), recall(&perfect), f1(&perfect), mcc(&perfect)), (1.0, 1.0, 1.0, 1.0));
        let cm = ConfusionMatrix::new(9, 1, 8, 2);
        assert!((mcc(&cm) - 70.0 / 9900f64.sqrt()).abs() < 1e-12);
        assert!((mcc(&cm) - 0.7035).abs() < 1e-4);
    }

    #[test]
    fn degenerate_flags() {
        let r = classification_report(&ConfusionMatrix::new(0, 0, 5, 0));
        assert_eq!(r.precision, 0.0);
        assert_eq!(r.mcc, 0.0);
        assert_eq!(r.degenerate, vec!["precision", "recall", "f1", "mcc"]);
        assert!(classification_report(&ConfusionMatrix::new(1, 1, 1, 1)).degenerate.is_empty());
    }

    proptest! {
        #[test]
        fn bounds(tp in 0u64..50, fp in 0u64..50, tn in 0u64..50, fn_ in 0u64..50) {
            let cm = ConfusionMatrix::new(tp, fp, tn, fn_);
            let (p, r, f, m) = (precision(&cm), recall(&cm), f1(&cm), mcc(&cm));
            for v in [p, r, f] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&m));
            if p + r > 0.0 {
                prop_assert!(f <= p.max(r) + 1e-12 && f >= p.min(r) - 1e-12);
            }
            // swapping predictions with their complement: tp<->fn, fp<->tn
            let swapped = ConfusionMatrix::new(fn_, tn, fp, tp);
            if classification_report(&cm).degenerate.iter().all(|d| d != "mcc") {
                prop_assert!((mcc(&swapped) + m).abs() < 1e-12);
            }
        }
    }
}
