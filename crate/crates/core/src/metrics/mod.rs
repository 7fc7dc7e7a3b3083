//! Confusion-matrix statistics, Cohen's kappa and one-vs-rest ROC AUC.

mod report;

pub use report::{ParamCounts, Report};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const Z95: f64 = 1.96;

/// Counts indexed `[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument(
                "confusion matrix must be square and non-empty".into(),
            ));
        }
        Ok(ConfusionMatrix {
            k,
            counts: rows.concat(),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|j| self.get(j, j)).sum()
    }

    pub fn row_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|p| self.get(j, p)).sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, j)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k).map(<[u64]>::to_vec).collect()
    }
}

pub fn confusion(truth: &[usize], pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "{} true labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let mut counts = vec![0; k * k];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= k || p >= k {
            return Err(Error::InvalidArgument(format!(
                "label pair ({t}, {p}) out of range for {k} classes"
            )));
        }
        counts[t * k + p] += 1;
    }
    Ok(ConfusionMatrix { k, counts })
}

/// One-vs-rest statistics for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub accuracy: f64,
    #[serde(rename = "f1_score")]
    pub f1: f64,
    /// `None` until scores are attached, or when the class has no positives or no negatives.
    pub auc: Option<f64>,
    pub error_rate: f64,
    #[serde(rename = "false_negative_rate")]
    pub fnr: f64,
    #[serde(rename = "false_positive_rate")]
    pub fpr: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub support: u64,
    /// Statistics whose denominator was zero and were reported as 0.
    pub undefined: Vec<String>,
}

impl ClassReport {
    pub fn is_degenerate(&self) -> bool {
        !self.undefined.is_empty()
    }
}

fn ratio(num: u64, den: u64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn per_class_stats(cm: &ConfusionMatrix) -> Result<Vec<ClassReport>> {
    let n = cm.n();
    if n == 0 {
        return Err(Error::InvalidArgument("confusion matrix is empty".into()));
    }
    Ok((0..cm.k())
        .map(|j| {
            let tp = cm.get(j, j);
            let fn_ = cm.row_sum(j) - tp;
            let fp = cm.col_sum(j) - tp;
            let tn = n - tp - fn_ - fp;
            let mut undefined = Vec::new();
            let sensitivity = ratio(tp, tp + fn_, "sensitivity", &mut undefined);
            let specificity = ratio(tn, tn + fp, "specificity", &mut undefined);
            let fpr = ratio(fp, fp + tn, "false_positive_rate", &mut undefined);
            let fnr = ratio(fn_, fn_ + tp, "false_negative_rate", &mut undefined);
            let f1 = ratio(2 * tp, 2 * tp + fp + fn_, "f1_score", &mut undefined);
            let accuracy = (tp + tn) as f64 / n as f64;
            ClassReport {
                accuracy,
                f1,
                auc: None,
                error_rate: (fp + fn_) as f64 / n as f64,
                fnr,
                fpr,
                specificity,
                sensitivity,
                support: tp + fn_,
                undefined,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallReport {
    pub n: u64,
    pub accuracy: f64,
    pub accuracy_ci95: (f64, f64),
    /// Micro-averaged, equal to accuracy for single-label data.
    #[serde(rename = "f1_score")]
    pub f1: f64,
    #[serde(rename = "false_negative_rate")]
    pub fnr: f64,
    #[serde(rename = "false_positive_rate")]
    pub fpr: f64,
    #[serde(rename = "true_negative_rate")]
    pub tnr: f64,
    #[serde(rename = "true_positive_rate")]
    pub tpr: f64,
    pub kappa: f64,
    pub kappa_ci95: (f64, f64),
    #[serde(rename = "kappa_standard_error")]
    pub kappa_se: f64,
    /// Chance agreement is 1, so kappa and its error are reported as 0.
    pub kappa_undefined: bool,
    /// Mean over classes of the one-vs-rest accuracy.
    pub mean_one_vs_rest_accuracy: f64,
}

fn clip_interval(centre: f64, half: f64, lo: f64, hi: f64) -> (f64, f64) {
    ((centre - half).clamp(lo, hi), (centre + half).clamp(lo, hi))
}

pub fn overall_stats(cm: &ConfusionMatrix) -> Result<OverallReport> {
    let n = cm.n();
    if n == 0 {
        return Err(Error::InvalidArgument("confusion matrix is empty".into()));
    }
    let k = cm.k();
    let nf = n as f64;
    let po = cm.trace() as f64 / nf;

    // micro-averaged one-vs-rest counts
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for j in 0..k {
        let t = cm.get(j, j);
        let f_n = cm.row_sum(j) - t;
        let f_p = cm.col_sum(j) - t;
        tp += t;
        fn_ += f_n;
        fp += f_p;
        tn += n - t - f_n - f_p;
    }
    let frac = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let tpr = frac(tp, tp + fn_);
    let fpr = frac(fp, fp + tn);

    let pe = (0..k)
        .map(|j| cm.row_sum(j) as f64 * cm.col_sum(j) as f64)
        .sum::<f64>()
        / (nf * nf);
    let kappa_undefined = (1.0 - pe).abs() < 1e-15;
    let (kappa, kappa_se) = if kappa_undefined {
        (0.0, 0.0)
    } else {
        let kappa = (po - pe) / (1.0 - pe);
        let se = (po * (1.0 - po) / (nf * (1.0 - pe) * (1.0 - pe))).sqrt();
        (kappa, se)
    };
    let acc_half = Z95 * (po * (1.0 - po) / nf).sqrt();
    let per_class = per_class_stats(cm)?;
    Ok(OverallReport {
        n,
        accuracy: po,
        accuracy_ci95: clip_interval(po, acc_half, 0.0, 1.0),
        f1: frac(2 * tp, 2 * tp + fp + fn_),
        fnr: frac(fn_, fn_ + tp),
        fpr,
        tnr: frac(tn, tn + fp),
        tpr,
        kappa,
        kappa_ci95: clip_interval(kappa, Z95 * kappa_se, -1.0, 1.0),
        kappa_se,
        kappa_undefined,
        mean_one_vs_rest_accuracy: per_class.iter().map(|c| c.accuracy).sum::<f64>() / k as f64,
    })
}

/// Ranks starting at 1, ties sharing the mean of the ranks they span.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// One-vs-rest AUC per class from the rank statistic. `None` marks a class
/// with no positives or no negatives.
pub fn auc_ovr(scores: &Tensor, truth: &[usize]) -> Result<Vec<Option<f64>>> {
    let (n, k) = scores.dims2("auc_ovr")?;
    if truth.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {n} score rows",
            truth.len()
        )));
    }
    if let Some(&bad) = truth.iter().find(|&&t| t >= k) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    Ok((0..k)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| scores.data()[i * k + j]).collect();
            let p = truth.iter().filter(|&&t| t == j).count();
            let neg = n - p;
            if p == 0 || neg == 0 {
                return None;
            }
            let ranks = midranks(&col);
            let rank_sum: f64 = (0..n).filter(|&i| truth[i] == j).map(|i| ranks[i]).sum();
            let (pf, nf) = (p as f64, neg as f64);
            Some((rank_sum - pf * (pf + 1.0) / 2.0) / (pf * nf))
        })
        .collect())
}

/// Per-class reports with AUC attached from `scores`.
pub fn class_reports(
    cm: &ConfusionMatrix,
    scores: &Tensor,
    truth: &[usize],
) -> Result<Vec<ClassReport>> {
    let mut reports = per_class_stats(cm)?;
    for (r, auc) in reports.iter_mut().zip(auc_ovr(scores, truth)?) {
        if auc.is_none() {
            r.undefined.push("auc".into());
        }
        r.auc = auc;
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cm(rows: &[&[u64]]) -> ConfusionMatrix {
        ConfusionMatrix::from_counts(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let c = confusion(&[0, 0, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(c.rows(), vec![vec![2, 0], vec![0, 2]]);
        let c = confusion(&[0, 1, 2], &[0, 0, 0], 3).unwrap();
        for t in 0..3 {
            assert_eq!(c.get(t, 0), 1);
            assert_eq!(c.get(t, 1) + c.get(t, 2), 0);
        }
        assert!(confusion(&[0, 3], &[0, 1], 3).is_err());
        assert!(confusion(&[0], &[0, 1], 3).is_err());
    }

    #[test]
    fn per_class_examples() {
        for r in per_class_stats(&cm(&[&[2, 0], &[0, 2]])).unwrap() {
            assert_eq!((r.sensitivity, r.specificity, r.f1), (1.0, 1.0, 1.0));
        }
        let r = &per_class_stats(&cm(&[&[4, 1], &[2, 3]])).unwrap()[0];
        assert!((r.sensitivity - 0.8).abs() < 1e-12);
        assert!((r.specificity - 0.6).abs() < 1e-12);
        assert!((r.f1 - 0.72727).abs() < 1e-5);
    }

    #[test]
    fn zero_support_class_is_flagged() {
        let r = &per_class_stats(&cm(&[&[3, 0, 0], &[0, 2, 0], &[0, 0, 0]])).unwrap()[2];
        assert!(r.is_degenerate());
        assert_eq!(r.sensitivity, 0.0);
        assert_eq!(r.f1, 0.0);
        assert!(r.undefined.contains(&"sensitivity".to_string()));
        assert!(per_class_stats(&cm(&[&[0, 0], &[0, 0]])).is_err());
    }

    #[test]
    fn overall_examples() {
        let o = overall_stats(&cm(&[&[2, 0], &[0, 2]])).unwrap();
        assert_eq!(o.kappa, 1.0);
        let o = overall_stats(&cm(&[&[4, 1], &[2, 3]])).unwrap();
        assert!((o.accuracy - 0.7).abs() < 1e-12);
        assert!((o.kappa - 0.4).abs() < 1e-12);
        assert!((o.kappa_se - 0.28983).abs() < 1e-5);
        assert!((o.kappa_ci95.0 + 0.16807).abs() < 1e-5);
        assert!((o.kappa_ci95.1 - 0.96807).abs() < 1e-5);
    }

    #[test]
    fn kappa_undefined_when_chance_is_certain() {
        let o = overall_stats(&cm(&[&[5, 0], &[0, 0]])).unwrap();
        assert!(o.kappa_undefined);
        assert_eq!(o.kappa, 0.0);
    }

    #[test]
    fn auc_examples() {
        let s = Tensor::from_rows(&[&[0.1, 0.9], &[0.2, 0.8], &[0.9, 0.1], &[0.8, 0.2]]);
        assert_eq!(auc_ovr(&s, &[1, 1, 0, 0]).unwrap()[1], Some(1.0));
        let s = Tensor::from_rows(&[&[0.2, 0.8], &[0.6, 0.4], &[0.4, 0.6], &[0.8, 0.2]]);
        assert_eq!(auc_ovr(&s, &[1, 1, 0, 0]).unwrap()[1], Some(0.75));
        let s = Tensor::full(&[5, 2], 0.5);
        assert_eq!(
            auc_ovr(&s, &[0, 1, 0, 1, 1]).unwrap(),
            vec![Some(0.5), Some(0.5)]
        );
        assert_eq!(auc_ovr(&s, &[0, 0, 0, 0, 0]).unwrap(), vec![None, None]);
    }

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }
}
