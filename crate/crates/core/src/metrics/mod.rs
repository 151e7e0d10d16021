//! Confusion matrices, the five screening metrics, fold aggregation and
//! report files. Abnormal is the positive class throughout.

mod report;

use thiserror::Error;

use crate::signal_io::Label;

pub use report::{metrics_csv, parse_metrics_csv, render_report, ReportFold};

/// Default decision threshold on the sigmoid output.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{probs} probabilities but {labels} labels")]
    LengthMismatch { probs: usize, labels: usize },
    #[error("cannot aggregate an empty list of reports")]
    EmptyInput,
    #[error("bad metrics CSV: {0}")]
    BadCsv(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::Abnormal, Label::Abnormal) => self.tp += 1,
            (Label::Abnormal, Label::Normal) => self.fp += 1,
            (Label::Normal, Label::Normal) => self.tn += 1,
            (Label::Normal, Label::Abnormal) => self.fn_ += 1,
        }
    }

    pub fn merge(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }
}

/// Thresholds a probability: Abnormal iff `p >= threshold`.
pub fn classify(p: f64, threshold: f64) -> Label {
    if p >= threshold {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

pub fn confusion(probs: &[f64], labels: &[Label], threshold: f64) -> Result<ConfusionMatrix, MetricsError> {
    if probs.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            probs: probs.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in probs.iter().zip(labels) {
        cm.record(classify(p, threshold), y);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Accuracy,
    Sensitivity,
    Specificity,
    Precision,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Accuracy,
        Metric::Sensitivity,
        Metric::Specificity,
        Metric::Precision,
        Metric::F1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Sensitivity => "sensitivity",
            Metric::Specificity => "specificity",
            Metric::Precision => "precision",
            Metric::F1 => "f1",
        }
    }
}

/// The five metrics; `None` marks a value whose denominator was zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den != 0).then(|| num as f64 / den as f64)
}

impl MetricsReport {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Accuracy => self.accuracy,
            Metric::Sensitivity => self.sensitivity,
            Metric::Specificity => self.specificity,
            Metric::Precision => self.precision,
            Metric::F1 => self.f1,
        }
    }

    fn set(&mut self, m: Metric, v: Option<f64>) {
        match m {
            Metric::Accuracy => self.accuracy = v,
            Metric::Sensitivity => self.sensitivity = v,
            Metric::Specificity => self.specificity = v,
            Metric::Precision => self.precision = v,
            Metric::F1 => self.f1 = v,
        }
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_);
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    // 2PR/(P+R) simplifies to 2tp/(2tp+fp+fn) whenever both are defined and
    // nonzero; when tp = 0 the harmonic mean has a zero denominator.
    let f1 = match (precision, sensitivity) {
        (Some(_), Some(_)) if cm.tp > 0 => ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
        _ => None,
    };
    MetricsReport {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        sensitivity,
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        precision,
        f1,
    }
}

/// Per-metric summary across folds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    /// Population standard deviation over the defined values.
    pub std_dev: Option<f64>,
    pub max: Option<f64>,
    /// Folds whose value was undefined.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub folds: usize,
    pub mean: MetricsReport,
    pub max: MetricsReport,
    pub summaries: [MetricSummary; 5],
}

impl AggregateReport {
    pub fn summary(&self, m: Metric) -> &MetricSummary {
        &self.summaries[Metric::ALL.iter().position(|&x| x == m).unwrap()]
    }
}

pub fn aggregate_folds(reports: &[MetricsReport]) -> Result<AggregateReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut mean = MetricsReport::default();
    let mut max = MetricsReport::default();
    let mut summaries = [MetricSummary::default(); 5];
    for (slot, m) in summaries.iter_mut().zip(Metric::ALL) {
        let values: Vec<f64> = reports.iter().filter_map(|r| r.get(m)).collect();
        let excluded = reports.len() - values.len();
        *slot = if values.is_empty() {
            MetricSummary {
                excluded,
                ..MetricSummary::default()
            }
        } else {
            let n = values.len() as f64;
            let mu = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            MetricSummary {
                mean: Some(mu),
                std_dev: Some(var.sqrt()),
                max: values.iter().copied().reduce(f64::max),
                excluded,
            }
        };
        mean.set(m, slot.mean);
        max.set(m, slot.max);
    }
    Ok(AggregateReport {
        folds: reports.len(),
        mean,
        max,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    #[test]
    fn tallies() {
        let cm = confusion(&[0.9, 0.1], &[Abnormal, Normal], 0.5).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 1, fp: 0, tn: 1, fn_: 0 });
        assert_eq!(confusion(&[0.5], &[Normal], 0.5).unwrap().fp, 1);
        assert_eq!(confusion(&[], &[], 0.5).unwrap(), ConfusionMatrix::default());
        assert_eq!(
            confusion(&[0.1], &[], 0.5),
            Err(MetricsError::LengthMismatch { probs: 1, labels: 0 })
        );
    }

    #[test]
    fn worked_example() {
        let r = compute_metrics(&ConfusionMatrix { tp: 96, fn_: 4, tn: 92, fp: 8 });
        let close = |a: Option<f64>, b: f64| (a.unwrap() - b).abs() < 1e-6;
        assert!(close(r.accuracy, 0.94));
        assert!(close(r.sensitivity, 0.96));
        assert!(close(r.specificity, 0.92));
        assert!(close(r.precision, 0.923077));
        assert!(close(r.f1, 0.941176));
    }

    #[test]
    fn perfect_and_undefined() {
        let r = compute_metrics(&ConfusionMatrix { tp: 3, fp: 0, tn: 5, fn_: 0 });
        assert!(Metric::ALL.iter().all(|&m| r.get(m) == Some(1.0)));
        let r = compute_metrics(&ConfusionMatrix { tp: 0, fp: 0, tn: 5, fn_: 2 });
        assert_eq!(r.precision, None);
        assert_eq!(r.f1, None);
        assert!(r.accuracy.is_some() && r.sensitivity.is_some() && r.specificity.is_some());
        assert_eq!(compute_metrics(&ConfusionMatrix::default()), MetricsReport::default());
    }

    #[test]
    fn aggregation() {
        let a = MetricsReport {
            accuracy: Some(0.90),
            precision: None,
            ..Default::default()
        };
        let b = MetricsReport {
            accuracy: Some(0.94),
            precision: Some(0.9),
            ..Default::default()
        };
        let agg = aggregate_folds(&[a, b]).unwrap();
        assert!((agg.mean.accuracy.unwrap() - 0.92).abs() < 1e-12);
        assert!((agg.summary(Metric::Accuracy).std_dev.unwrap() - 0.02).abs() < 1e-12);
        assert_eq!(agg.mean.precision, Some(0.9));
        assert_eq!(agg.summary(Metric::Precision).excluded, 1);
        assert_eq!(agg.mean.f1, None);
        assert_eq!(agg.summary(Metric::F1).excluded, 2);
        assert_eq!(aggregate_folds(&[]), Err(MetricsError::EmptyInput));
    }

    #[test]
    fn identical_reports_have_zero_spread() {
        let r = compute_metrics(&ConfusionMatrix { tp: 7, fp: 2, tn: 9, fn_: 1 });
        let agg = aggregate_folds(&[r; 4]).unwrap();
        for m in Metric::ALL {
            assert!((agg.mean.get(m).unwrap() - r.get(m).unwrap()).abs() < 1e-15);
            assert!(agg.summary(m).std_dev.unwrap() < 1e-15);
        }
    }
}
