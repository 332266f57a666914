use ndarray::Array2;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::svm::SvmModel;
use crate::error::{Error, Result};

/// `counts[t][p]`: rows of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels vs {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut counts = vec![vec![0; n_classes]; n_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= n_classes || p >= n_classes {
                return Err(Error::InvalidInput(format!("label out of range 0..{n_classes}")));
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn accuracy(&self) -> f64 {
        let trace: usize = (0..self.n_classes()).map(|i| self.counts[i][i]).sum();
        trace as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// No predicted positives; precision reported as 0.
    pub precision_undefined: bool,
    /// No true positives in the test set; recall reported as 0.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-class and macro-averaged precision, recall and F-score.
pub fn metrics_from_confusion(confusion: &ConfusionMatrix) -> Result<RunMetrics> {
    let n = confusion.n_classes();
    if n == 0 || confusion.total() == 0 {
        return Err(Error::InvalidInput("empty confusion matrix".into()));
    }
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = confusion.counts[c][c] as f64;
            let predicted: usize = (0..n).map(|t| confusion.counts[t][c]).sum();
            let actual: usize = confusion.counts[c].iter().sum();
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
            ClassMetrics {
                precision,
                recall,
                f_score: f_score(precision, recall),
                precision_undefined: predicted == 0,
                recall_undefined: actual == 0,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    Ok(RunMetrics {
        accuracy: confusion.accuracy(),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f_score: mean(|m| m.f_score),
        per_class,
        confusion: confusion.clone(),
    })
}

pub fn evaluate(model: &SvmModel, x: &Array2<f64>, y: &[usize]) -> Result<RunMetrics> {
    if x.nrows() == 0 {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let pred = model.predict(x)?;
    metrics_from_confusion(&ConfusionMatrix::from_predictions(y, &pred, model.n_classes())?)
}

/// `mean ± halfwidth` from a two-tailed Student t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub halfwidth: f64,
}

pub fn confidence_interval(values: &[f64], level: f64) -> Result<Interval> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "confidence interval needs at least 2 values, got {n}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level {level} outside (0, 1)")));
    }
    if values.iter().all(|v| *v == values[0]) {
        return Ok(Interval {
            mean: values[0],
            halfwidth: 0.0,
        });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::InvalidInput(e.to_string()))?
        .inverse_cdf(0.5 + level / 2.0);
    Ok(Interval {
        mean,
        halfwidth: t * (var / n as f64).sqrt(),
    })
}

/// Metrics over repeated runs. Intervals are present once there are two runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: Vec<RunMetrics>,
    pub level: f64,
    pub accuracy: Option<Interval>,
    pub precision: Option<Interval>,
    pub recall: Option<Interval>,
    pub f_score: Option<Interval>,
}

impl EvalReport {
    pub fn from_runs(runs: Vec<RunMetrics>, level: f64) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::InvalidInput("no runs to summarize".into()));
        }
        let ci = |f: fn(&RunMetrics) -> f64| -> Result<Option<Interval>> {
            if runs.len() < 2 {
                return Ok(None);
            }
            confidence_interval(&runs.iter().map(f).collect::<Vec<_>>(), level).map(Some)
        };
        Ok(EvalReport {
            accuracy: ci(|r| r.accuracy)?,
            precision: ci(|r| r.precision)?,
            recall: ci(|r| r.recall)?,
            f_score: ci(|r| r.f_score)?,
            runs,
            level,
        })
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.runs.iter().map(|r| r.accuracy).sum::<f64>() / self.runs.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier() {
        let m = metrics_from_confusion(&ConfusionMatrix {
            counts: vec![vec![2, 0], vec![0, 2]],
        })
        .unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f_score), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn substitution_case() {
        // class 0: TP=1, FP=1, FN=1
        let m = metrics_from_confusion(&ConfusionMatrix {
            counts: vec![vec![1, 1], vec![1, 3]],
        })
        .unwrap();
        let c0 = &m.per_class[0];
        assert_eq!((c0.precision, c0.recall, c0.f_score), (0.5, 0.5, 0.5));
        assert_eq!(m.accuracy, 4.0 / 6.0);
    }

    #[test]
    fn undefined_precision_is_flagged() {
        let m = metrics_from_confusion(&ConfusionMatrix {
            counts: vec![vec![3, 0], vec![2, 0]],
        })
        .unwrap();
        assert!(m.per_class[1].precision_undefined);
        assert_eq!(m.per_class[1].precision, 0.0);
        assert!(!m.per_class[0].precision_undefined);
    }

    #[test]
    fn intervals() {
        let ci = confidence_interval(&[0.981; 10], 0.95).unwrap();
        assert_eq!(ci.halfwidth, 0.0);
        assert_eq!(ci.mean, 0.981);
        // n=2, values 0 and 2: s = √2, t(0.975, 1) = 12.7062
        let ci = confidence_interval(&[0.0, 2.0], 0.95).unwrap();
        assert!((ci.halfwidth - 12.706_204_736).abs() < 1e-6);
        assert!(confidence_interval(&[1.0], 0.95).is_err());
    }

    #[test]
    fn report_without_intervals_for_single_run() {
        let run = metrics_from_confusion(&ConfusionMatrix {
            counts: vec![vec![1, 0], vec![0, 1]],
        })
        .unwrap();
        let r = EvalReport::from_runs(vec![run.clone()], 0.95).unwrap();
        assert!(r.accuracy.is_none());
        let r = EvalReport::from_runs(vec![run.clone(), run], 0.95).unwrap();
        assert_eq!(r.accuracy.unwrap().halfwidth, 0.0);
    }
}
