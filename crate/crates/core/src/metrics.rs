//! Per-class and macro precision/recall/F1 over scored predictions.
//!
//! Class 1 is the positive class. Zero-denominator metrics evaluate to 0 and
//! carry an explicit degenerate flag. Unscored predictions are never dropped
//! silently; they surface as a coverage rate.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::Label;
use crate::inference::Prediction;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    pub fn add(&mut self, gold: Label, predicted: Label) {
        match (gold, predicted) {
            (Label::Pos, Label::Pos) => self.true_pos += 1,
            (Label::Neg, Label::Pos) => self.false_pos += 1,
            (Label::Pos, Label::Neg) => self.false_neg += 1,
            (Label::Neg, Label::Neg) => self.true_neg += 1,
        }
    }

    /// Partial tallies merge associatively and commutatively.
    pub fn merge(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        ConfusionMatrix {
            true_pos: self.true_pos + other.true_pos,
            false_pos: self.false_pos + other.false_pos,
            false_neg: self.false_neg + other.false_neg,
            true_neg: self.true_neg + other.true_neg,
        }
    }

    /// The same counts with class 0 treated as positive.
    pub fn swapped(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            true_pos: self.true_neg,
            false_pos: self.false_neg,
            false_neg: self.false_pos,
            true_neg: self.true_pos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True when a zero denominator forced a metric to 0 by convention.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MacroMetrics {
    pub class_pos: ClassMetrics,
    pub class_neg: ClassMetrics,
    pub macro_f1: f64,
}

/// Confusion counts plus the predictions that could not be scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfusionSummary {
    pub matrix: ConfusionMatrix,
    pub excluded: usize,
}

impl ConfusionSummary {
    pub fn coverage(&self) -> f64 {
        let total = self.matrix.total() + self.excluded;
        if total == 0 {
            0.0
        } else {
            self.matrix.total() as f64 / total as f64
        }
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no scorable predictions: {excluded} prediction(s) were excluded")]
    EmptyEvaluation { excluded: usize },
}

/// Tallies scored predictions into a confusion matrix. Predictions without a
/// resolved label (error_out fallback) are counted as excluded.
pub fn confusion(predictions: &[Prediction]) -> Result<ConfusionSummary, MetricsError> {
    let mut matrix = ConfusionMatrix::default();
    let mut excluded = 0;
    for p in predictions {
        match p.predicted {
            Some(predicted) => matrix.add(p.gold, predicted),
            None => excluded += 1,
        }
    }
    if matrix.total() == 0 {
        return Err(MetricsError::EmptyEvaluation { excluded });
    }
    Ok(ConfusionSummary { matrix, excluded })
}

pub fn harmonic_mean(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn class_metrics(cm: &ConfusionMatrix) -> ClassMetrics {
    let pred_pos = cm.true_pos + cm.false_pos;
    let gold_pos = cm.true_pos + cm.false_neg;
    let degenerate = pred_pos == 0 || gold_pos == 0;
    let precision = if pred_pos == 0 { 0.0 } else { cm.true_pos as f64 / pred_pos as f64 };
    let recall = if gold_pos == 0 { 0.0 } else { cm.true_pos as f64 / gold_pos as f64 };
    ClassMetrics { precision, recall, f1: harmonic_mean(precision, recall), degenerate }
}

/// Per-class metrics for both label orientations plus their unweighted mean.
pub fn evaluate(cm: &ConfusionMatrix) -> MacroMetrics {
    let class_pos = class_metrics(cm);
    let class_neg = class_metrics(&cm.swapped());
    MacroMetrics { class_pos, class_neg, macro_f1: (class_pos.f1 + class_neg.f1) / 2.0 }
}

/// Full evaluation report for one run.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub matrix: ConfusionMatrix,
    pub metrics: MacroMetrics,
    pub scored: usize,
    pub excluded: usize,
    pub coverage: f64,
}

pub fn report(predictions: &[Prediction]) -> Result<EvalReport, MetricsError> {
    let summary = confusion(predictions)?;
    let metrics = evaluate(&summary.matrix);
    Ok(EvalReport {
        matrix: summary.matrix,
        metrics,
        scored: summary.matrix.total(),
        excluded: summary.excluded,
        coverage: summary.coverage(),
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.matrix;
        writeln!(f, "confusion  tp={} fp={} fn={} tn={}", m.true_pos, m.false_pos, m.false_neg, m.true_neg)?;
        writeln!(f, "scored={} excluded={} coverage={:.4}", self.scored, self.excluded, self.coverage)?;
        writeln!(f, "class      precision  recall     f1")?;
        for (name, c) in [("1", &self.metrics.class_pos), ("0", &self.metrics.class_neg)] {
            writeln!(
                f,
                "{name}          {:.4}     {:.4}     {:.4}{}",
                c.precision,
                c.recall,
                c.f1,
                if c.degenerate { "  (degenerate)" } else { "" }
            )?;
        }
        write!(f, "macro F1   {:.4}", self.metrics.macro_f1)
    }
}
