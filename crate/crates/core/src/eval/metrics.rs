use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::chain::StressVerdict;

/// Binary confusion counts; the positive class is `Stressed`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

/// Derived scores. A metric whose denominator is zero is reported as 0 and
/// named in `undefined`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

fn ratio(num: f64, den: f64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num / den
    }
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, pred: StressVerdict, gold: StressVerdict) {
        match (pred.is_stressed(), gold.is_stressed()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn metrics(&self) -> Metrics {
        let mut undefined = Vec::new();
        let (tp, fp, fn_, tn) = (self.tp as f64, self.fp as f64, self.fn_ as f64, self.tn as f64);
        let accuracy = ratio(tp + tn, tp + fp + fn_ + tn, "accuracy", &mut undefined);
        let precision = ratio(tp, tp + fp, "precision", &mut undefined);
        let recall = ratio(tp, tp + fn_, "recall", &mut undefined);
        let f1 = ratio(2.0 * precision * recall, precision + recall, "f1", &mut undefined);
        Metrics { accuracy, precision, recall, f1, undefined }
    }
}

/// Confusion matrix and scores for paired predictions and gold labels.
pub fn compute_metrics(
    pred: &[StressVerdict],
    gold: &[StressVerdict],
) -> Result<(ConfusionMatrix, Metrics), EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch { pred: pred.len(), gold: gold.len() });
    }
    let mut m = ConfusionMatrix::default();
    for (p, g) in pred.iter().zip(gold) {
        m.record(*p, *g);
    }
    Ok((m, m.metrics()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use StressVerdict::*;

    #[test]
    fn hand_case() {
        let m = ConfusionMatrix { tp: 3, fp: 1, fn_: 1, tn: 5 };
        let s = m.metrics();
        assert_eq!((s.accuracy, s.precision, s.recall, s.f1), (0.8, 0.75, 0.75, 0.75));
        assert!(s.undefined.is_empty());
    }

    #[test]
    fn perfect_and_degenerate() {
        let (_, s) = compute_metrics(&[Stressed, NonStressed], &[Stressed, NonStressed]).unwrap();
        assert_eq!((s.accuracy, s.f1), (1.0, 1.0));
        let (m, s) = compute_metrics(&[NonStressed, NonStressed], &[Stressed, NonStressed]).unwrap();
        assert_eq!(m, ConfusionMatrix { tp: 0, fp: 0, fn_: 1, tn: 1 });
        assert_eq!((s.precision, s.recall), (0.0, 0.0));
        assert_eq!(s.undefined, ["precision", "f1"]);
        let (_, s) = compute_metrics(&[], &[]).unwrap();
        assert!(s.undefined.contains(&"accuracy".to_string()));
        assert!(compute_metrics(&[Stressed], &[]).is_err());
    }

    #[test]
    fn serialized_field_is_fn() {
        let j = serde_json::to_value(ConfusionMatrix { tp: 1, fp: 2, fn_: 3, tn: 4 }).unwrap();
        assert_eq!(j["fn"], 3);
    }
}
