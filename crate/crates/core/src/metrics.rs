//! Confusion matrix and the macro-averaged classification metrics.
//!
//! Precision and recall are averaged over classes, skipping classes whose denominator is
//! zero (a class never predicted has no precision; a class absent from the truth has no
//! recall). F1 is then the harmonic mean of the two macro averages, which is not the
//! same number as the mean of per-class F1 scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K×K` counts, rows = true class, columns = predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
    pub class_names: Vec<String>,
}

/// How to treat classes whose precision or recall denominator is zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UndefinedClasses {
    /// Leave them out of the mean.
    #[default]
    Omit,
    /// Refuse to average.
    Error,
}

pub fn confusion(true_labels: &[usize], predicted: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted.len() {
        return Err(Error::Metrics(format!(
            "{} true labels but {} predictions",
            true_labels.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(num_classes);
    for (&t, &p) in true_labels.iter().zip(predicted) {
        if t >= num_classes || p >= num_classes {
            return Err(Error::Metrics(format!("label pair ({t}, {p}) out of range for {num_classes} classes")));
        }
        cm.counts[t * num_classes + p] += 1;
    }
    Ok(cm)
}

impl ConfusionMatrix {
    pub fn zeros(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
            class_names: (0..num_classes).map(|k| k.to_string()).collect(),
        }
    }

    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Metrics("confusion matrix must be square".into()));
        }
        let mut cm = Self::zeros(k);
        cm.counts = rows.concat();
        Ok(cm)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes {
            return Err(Error::Metrics(format!("{} names for {} classes", names.len(), self.num_classes)));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn count(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.num_classes.max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        (0..self.num_classes).map(|p| self.count(k, p)).sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        (0..self.num_classes).map(|t| self.count(t, k)).sum()
    }

    pub fn true_positives(&self, k: usize) -> u64 {
        self.count(k, k)
    }

    pub fn false_positives(&self, k: usize) -> u64 {
        self.col_sum(k) - self.true_positives(k)
    }

    pub fn false_negatives(&self, k: usize) -> u64 {
        self.row_sum(k) - self.true_positives(k)
    }

    pub fn true_negatives(&self, k: usize) -> u64 {
        self.total() - self.true_positives(k) - self.false_positives(k) - self.false_negatives(k)
    }

    /// Multiclass accuracy, trace / total.
    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::Metrics("accuracy of an empty confusion matrix".into()));
        }
        let trace: u64 = (0..self.num_classes).map(|k| self.count(k, k)).sum();
        Ok(trace as f64 / total as f64)
    }

    /// Per-class precision; `None` where the class was never predicted.
    pub fn precisions(&self) -> Vec<Option<f64>> {
        (0..self.num_classes)
            .map(|k| ratio(self.true_positives(k), self.col_sum(k)))
            .collect()
    }

    /// Per-class recall; `None` where the class never occurs in the truth.
    pub fn recalls(&self) -> Vec<Option<f64>> {
        (0..self.num_classes)
            .map(|k| ratio(self.true_positives(k), self.row_sum(k)))
            .collect()
    }

    pub fn macro_precision_recall(&self, undefined: UndefinedClasses) -> Result<(f64, f64)> {
        Ok((
            macro_mean(&self.precisions(), undefined, "precision")?,
            macro_mean(&self.recalls(), undefined, "recall")?,
        ))
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn macro_mean(values: &[Option<f64>], undefined: UndefinedClasses, what: &str) -> Result<f64> {
    if undefined == UndefinedClasses::Error {
        if let Some(k) = values.iter().position(Option::is_none) {
            return Err(Error::Metrics(format!("{what} of class {k} is undefined (zero denominator)")));
        }
    }
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::Metrics(format!("{what} is undefined for every class")));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Harmonic mean of macro precision and macro recall; 0 when both are 0.
pub fn f1_from_macro(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        log::warn!("precision and recall are both 0; reporting F1 = 0");
        return 0.0;
    }
    2.0 * (precision * recall) / (precision + recall)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub f1: f64,
    pub training_time_s: f64,
}

impl MetricsRecord {
    pub fn from_confusion(cm: &ConfusionMatrix, training_time_s: f64) -> Result<Self> {
        let (p, r) = cm.macro_precision_recall(UndefinedClasses::Omit)?;
        Ok(MetricsRecord {
            accuracy: cm.accuracy()?,
            macro_precision: p,
            macro_recall: r,
            f1: f1_from_macro(p, r),
            training_time_s,
        })
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub train_acc: f64,
    pub train_loss: f64,
    pub val_acc: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    rows: Vec<HistoryRow>,
}

impl TrainingHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: HistoryRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.iteration <= last.iteration {
                return Err(Error::Metrics(format!(
                    "history iteration {} does not follow {}",
                    row.iteration, last.iteration
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[HistoryRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let labels = [0, 1, 2, 3, 1, 2];
        let cm = confusion(&labels, &labels, 4).unwrap();
        for t in 0..4 {
            for p in 0..4 {
                assert_eq!(cm.count(t, p) > 0, t == p);
            }
        }
        assert_eq!(cm.accuracy().unwrap(), 1.0);
        assert_eq!(cm.macro_precision_recall(UndefinedClasses::Omit).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn hand_counted_two_class() {
        let cm = confusion(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(cm.rows(), vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(cm.accuracy().unwrap(), 0.75);
        assert!(confusion(&[0], &[0, 1], 2).is_err());
        assert!(confusion(&[0], &[2], 2).is_err());
    }

    #[test]
    fn hand_macro_values() {
        let cm = ConfusionMatrix::from_counts(&[vec![2, 0], vec![1, 1]]).unwrap();
        let (p, r) = cm.macro_precision_recall(UndefinedClasses::Omit).unwrap();
        assert!((p - 5.0 / 6.0).abs() < 1e-15);
        assert!((r - 3.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn never_predicted_class_is_omitted() {
        // class 2 occurs but is never predicted
        let cm = ConfusionMatrix::from_counts(&[vec![3, 1, 0], vec![0, 2, 0], vec![1, 1, 0]]).unwrap();
        let (p, r) = cm.macro_precision_recall(UndefinedClasses::Omit).unwrap();
        let want_p = (3.0 / 4.0 + 2.0 / 4.0) / 2.0;
        let want_r = (3.0 / 4.0 + 1.0 + 0.0) / 3.0;
        assert!((p - want_p).abs() < 1e-15);
        assert!((r - want_r).abs() < 1e-15);
        assert!(cm.macro_precision_recall(UndefinedClasses::Error).is_err());
        assert!(ConfusionMatrix::zeros(3).macro_precision_recall(UndefinedClasses::Omit).is_err());
        assert!(ConfusionMatrix::zeros(3).accuracy().is_err());
    }

    #[test]
    fn f1_cases() {
        assert!((f1_from_macro(0.8, 0.8) - 0.8).abs() < 1e-15);
        assert!((f1_from_macro(1.0, 0.5) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_from_macro(0.0, 0.0), 0.0);
        assert!((f1_from_macro(0.877, 0.872) - 0.874_492_853_058_890_7).abs() < 1e-15);
    }

    #[test]
    fn history_iterations_strictly_increase() {
        let mut h = TrainingHistory::new();
        let row = |i| HistoryRow { iteration: i, train_acc: 0.5, train_loss: 1.0, val_acc: None, val_loss: None };
        h.push(row(1)).unwrap();
        h.push(row(2)).unwrap();
        assert!(h.push(row(2)).is_err());
    }

    proptest! {
        #[test]
        fn counting_identities(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..200)) {
            let (t, p): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let cm = confusion(&t, &p, 4).unwrap();
            prop_assert_eq!(cm.total(), t.len() as u64);
            for k in 0..4 {
                prop_assert_eq!(cm.row_sum(k), t.iter().filter(|&&x| x == k).count() as u64);
                prop_assert_eq!(
                    cm.true_positives(k) + cm.false_positives(k) + cm.false_negatives(k) + cm.true_negatives(k),
                    cm.total()
                );
            }
            let f = f1_from_macro(0.3, 0.3);
            prop_assert!((f - 0.3).abs() < 1e-15);
        }

        #[test]
        fn relabelling_permutes_matrix(pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..100)) {
            let perm = [2usize, 0, 3, 1];
            let (t, p): (Vec<_>, Vec<_>) = pairs.iter().copied().unzip();
            let cm = confusion(&t, &p, 4).unwrap();
            let pt: Vec<_> = t.iter().map(|&x| perm[x]).collect();
            let pp: Vec<_> = p.iter().map(|&x| perm[x]).collect();
            let pcm = confusion(&pt, &pp, 4).unwrap();
            for a in 0..4 {
                for b in 0..4 {
                    prop_assert_eq!(pcm.count(perm[a], perm[b]), cm.count(a, b));
                }
            }
            prop_assert_eq!(pcm.accuracy().unwrap(), cm.accuracy().unwrap());
        }

        #[test]
        fn f1_lies_between_precision_and_recall(p in 0.01f64..1.0, r in 0.01f64..1.0) {
            let f = f1_from_macro(p, r);
            prop_assert!(f >= p.min(r) - 1e-15 && f <= p.max(r) + 1e-15);
        }
    }
}
