use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{class_reports, confusion, overall_stats, ClassReport, ConfusionMatrix, OverallReport};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub total_params: usize,
    pub trainable_params: usize,
    pub non_trainable_params: usize,
}

impl ParamCounts {
    /// Every parameter in this engine is trainable.
    pub fn all_trainable(total: usize) -> Self {
        ParamCounts {
            total_params: total,
            trainable_params: total,
            non_trainable_params: 0,
        }
    }
}

/// Everything printed for one evaluated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub class_names: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub overall: OverallReport,
    pub classes: Vec<ClassReport>,
    pub params: Option<ParamCounts>,
    pub auc_method: String,
}

type StatFn = fn(&ClassReport) -> String;

impl Report {
    /// Predictions are the per-row argmax of `scores` (first index on ties).
    pub fn from_scores(
        scores: &Tensor,
        truth: &[usize],
        class_names: &[String],
        params: Option<ParamCounts>,
    ) -> Result<Report> {
        let (_, k) = scores.dims2("report")?;
        if class_names.len() != k {
            return Err(Error::InvalidArgument(format!(
                "{} class names for {k} score columns",
                class_names.len()
            )));
        }
        let pred = scores.argmax_rows()?;
        let cm = confusion(truth, &pred, k)?;
        Ok(Report {
            class_names: class_names.to_vec(),
            overall: overall_stats(&cm)?,
            classes: class_reports(&cm, scores, truth)?,
            confusion: cm,
            params,
            auc_method: "one-vs-rest rank statistic on softmax scores, midranks for ties".into(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned two-part table: overall statistics, then one column per class.
    pub fn to_text(&self) -> String {
        let o = &self.overall;
        let pair = |p: (f64, f64)| format!("({:.5}, {:.5})", p.0, p.1);
        let mut rows: Vec<(String, String)> = vec![
            ("95% CI".into(), pair(o.accuracy_ci95)),
            ("Accuracy".into(), format!("{:.3}%", o.accuracy * 100.0)),
            (
                "Mean One-vs-Rest Accuracy".into(),
                format!("{:.3}%", o.mean_one_vs_rest_accuracy * 100.0),
            ),
            ("F1 Score".into(), format!("{:.5}", o.f1)),
            ("False Negative Rate".into(), format!("{:.5}", o.fnr)),
            ("False Positive Rate".into(), format!("{:.5}", o.fpr)),
            ("True Negative Rate".into(), format!("{:.5}", o.tnr)),
            ("True Positive Rate".into(), format!("{:.5}", o.tpr)),
            ("Kappa".into(), format!("{:.5}", o.kappa)),
            ("Kappa 95% CI".into(), pair(o.kappa_ci95)),
            ("Kappa Standard Error".into(), format!("{:.5}", o.kappa_se)),
        ];
        if o.kappa_undefined {
            rows.push((
                "Kappa note".into(),
                "undefined, chance agreement is 1".into(),
            ));
        }
        if let Some(p) = &self.params {
            rows.push(("Total params".into(), p.total_params.to_string()));
            rows.push(("Trainable params".into(), p.trainable_params.to_string()));
            rows.push((
                "Non-trainable params".into(),
                p.non_trainable_params.to_string(),
            ));
        }
        let mut out = String::new();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let _ = writeln!(out, "Overall (n = {})", o.n);
        for (k, v) in &rows {
            let _ = writeln!(out, "  {k:<width$}  {v}");
        }

        let stats: [(&str, StatFn); 8] = [
            ("Accuracy", |c| format!("{:.5}", c.accuracy)),
            ("F1 Score", |c| format!("{:.5}", c.f1)),
            ("AUC", |c| c.auc.map_or("n/a".into(), |a| format!("{a:.5}"))),
            ("Error rate", |c| format!("{:.5}", c.error_rate)),
            ("False Negative Rate", |c| format!("{:.5}", c.fnr)),
            ("False Positive Rate", |c| format!("{:.5}", c.fpr)),
            ("Specificity", |c| format!("{:.5}", c.specificity)),
            ("Sensitivity", |c| format!("{:.5}", c.sensitivity)),
        ];
        let label_w = stats
            .iter()
            .map(|(n, _)| n.len())
            .max()
            .unwrap_or(0)
            .max("Support".len());
        let col_w = self
            .class_names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(9);
        let _ = writeln!(out, "\nPer class");
        let _ = write!(out, "  {:<label_w$}", "");
        for name in &self.class_names {
            let _ = write!(out, "  {name:>col_w$}");
        }
        out.push('\n');
        for (label, f) in &stats {
            let _ = write!(out, "  {label:<label_w$}");
            for c in &self.classes {
                let _ = write!(out, "  {:>col_w$}", f(c));
            }
            out.push('\n');
        }
        let _ = write!(out, "  {:<label_w$}", "Support");
        for c in &self.classes {
            let _ = write!(out, "  {:>col_w$}", c.support);
        }
        out.push('\n');
        for (name, c) in self.class_names.iter().zip(&self.classes) {
            if c.is_degenerate() {
                let _ = writeln!(
                    out,
                    "  note: {name}: zero denominator for {}",
                    c.undefined.join(", ")
                );
            }
        }
        let _ = writeln!(out, "\nAUC: {}", self.auc_method);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_from_scores() {
        let scores = Tensor::from_rows(&[&[0.9, 0.1], &[0.6, 0.4], &[0.3, 0.7], &[0.2, 0.8]]);
        let names = vec!["b".to_string(), "g".to_string()];
        let r = Report::from_scores(
            &scores,
            &[0, 1, 1, 1],
            &names,
            Some(ParamCounts::all_trainable(10)),
        )
        .unwrap();
        assert_eq!(r.confusion.rows(), vec![vec![1, 0], vec![1, 2]]);
        assert_eq!(r.overall.accuracy, 0.75);
        assert_eq!(r.classes[0].auc, Some(1.0));
        let text = r.to_text();
        assert!(text.contains("Kappa Standard Error"));
        assert!(text.contains("Total params"));
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(json["overall"]["accuracy"], 0.75);
        assert!(json["classes"][1]["false_negative_rate"].is_number());
        assert!(Report::from_scores(&scores, &[0, 1, 1, 1], &names[..1], None).is_err());
    }
}
