use serde::{Deserialize, Serialize};

use crate::depgraph::Polarity;
use crate::error::{Error, Result};

const C: usize = Polarity::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Accuracy and macro-F1 over the three polarity classes. Rows of the
/// confusion matrix are gold classes, columns predictions, both in
/// [`Polarity::class_index`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
    pub confusion: [[usize; C]; C],
    pub total: usize,
}

impl MetricsReport {
    /// Undefined precision, recall or F1 (zero denominators) count as 0.
    pub fn from_confusion(confusion: [[usize; C]; C]) -> Result<Self> {
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("no predictions to score".into()));
        }
        let correct: usize = (0..C).map(|k| confusion[k][k]).sum();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let per_class: Vec<ClassScores> = (0..C)
            .map(|k| {
                let tp = confusion[k][k];
                let predicted: usize = (0..C).map(|g| confusion[g][k]).sum();
                let support: usize = confusion[k].iter().sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                // 2PR/(P+R) in counts: one rounding, so independent scorers agree exactly
                let f1 = ratio(2 * tp, predicted + support);
                ClassScores {
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / C as f64;
        Ok(MetricsReport {
            accuracy: ratio(correct, total),
            macro_f1,
            per_class,
            confusion,
            total,
        })
    }

    pub fn from_pairs(gold: &[Polarity], predicted: &[Polarity]) -> Result<Self> {
        if gold.len() != predicted.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gold labels for {} predictions",
                gold.len(),
                predicted.len()
            )));
        }
        let mut confusion = [[0; C]; C];
        for (g, p) in gold.iter().zip(predicted) {
            confusion[g.class_index()][p.class_index()] += 1;
        }
        Self::from_confusion(confusion)
    }
}
