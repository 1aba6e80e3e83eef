use serde::{Deserialize, Serialize};

use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// One-vs-rest counts for `class` from paired label vectors.
    pub fn one_vs_rest(truth: &[usize], predicted: &[usize], class: usize) -> Self {
        let mut c = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == class, p == class) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }
}

/// Classification scores. `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
    pub kappa: Option<f64>,
    pub accuracy: Option<f64>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

pub fn confusion_metrics(counts: &ConfusionCounts) -> Result<ConfusionMetrics, MetricError> {
    if counts.total() == 0 {
        return Err(MetricError::EmptyCounts);
    }
    let (tp, tn, fp, fn_) = (counts.tp as f64, counts.tn as f64, counts.fp as f64, counts.fn_ as f64);
    let recall = ratio(tp, tp + fn_);
    let precision = ratio(tp, tp + fp);
    let f1 = match (recall, precision) {
        (Some(r), Some(p)) => ratio(2.0 * r * p, p + r),
        _ => None,
    };
    let mcc = ratio(tp * tn - fp * fn_, ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt());
    let kappa = ratio(
        2.0 * (tp * tn - fn_ * fp),
        (tp + fp) * (fp + tn) + (tp + fn_) * (fn_ + tn),
    );
    let accuracy = ratio(tp + tn, tp + fp + tn + fn_);
    Ok(ConfusionMetrics {
        recall,
        precision,
        f1,
        mcc,
        kappa,
        accuracy,
    })
}

/// Per-class one-vs-rest scores, their macro average, and overall accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassReport {
    pub per_class: Vec<ConfusionMetrics>,
    pub macro_average: ConfusionMetrics,
    pub accuracy: f64,
}

pub fn multiclass_metrics(truth: &[usize], predicted: &[usize], classes: usize) -> Result<MulticlassReport, MetricError> {
    if truth.len() != predicted.len() {
        return Err(MetricError::LengthMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricError::EmptyCounts);
    }
    let per_class = (0..classes)
        .map(|c| confusion_metrics(&ConfusionCounts::one_vs_rest(truth, predicted, c)))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = |f: fn(&ConfusionMetrics) -> Option<f64>| {
        let defined: Vec<f64> = per_class.iter().filter_map(f).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    };
    let macro_average = ConfusionMetrics {
        recall: mean(|m| m.recall),
        precision: mean(|m| m.precision),
        f1: mean(|m| m.f1),
        mcc: mean(|m| m.mcc),
        kappa: mean(|m| m.kappa),
        accuracy: mean(|m| m.accuracy),
    };
    let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    Ok(MulticlassReport {
        per_class,
        macro_average,
        accuracy: correct as f64 / truth.len() as f64,
    })
}
