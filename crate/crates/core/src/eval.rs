//! Accuracy, confusion matrices and misclassification reports.

use std::cmp::Ordering;

use thiserror::Error;

use crate::manifest::StyleClass;

/// Tolerance on the probability sum of a [`Prediction`].
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    Empty,
    #[error("prediction {painting_id:?}: probabilities sum to {sum}")]
    BadProbabilities { painting_id: String, sum: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub painting_id: String,
    pub true_class: StyleClass,
    pub probabilities: [f64; 9],
}

impl Prediction {
    pub fn new(
        painting_id: impl Into<String>,
        true_class: StyleClass,
        probabilities: [f64; 9],
    ) -> Result<Self, EvalError> {
        let painting_id = painting_id.into();
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE || probabilities.iter().any(|&p| p < 0.0) {
            return Err(EvalError::BadProbabilities { painting_id, sum });
        }
        Ok(Prediction {
            painting_id,
            true_class,
            probabilities,
        })
    }

    /// Argmax class; exact ties go to the lower class index.
    pub fn predicted(&self) -> StyleClass {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        StyleClass::ALL[best]
    }

    pub fn predicted_probability(&self) -> f64 {
        self.probabilities[self.predicted().ordinal()]
    }

    pub fn is_correct(&self) -> bool {
        self.predicted() == self.true_class
    }
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 9]; 9],
}

impl ConfusionMatrix {
    pub fn get(&self, truth: StyleClass, predicted: StyleClass) -> u64 {
        self.counts[truth.ordinal()][predicted.ordinal()]
    }

    pub fn row_total(&self, truth: StyleClass) -> u64 {
        self.counts[truth.ordinal()].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..9).map(|i| self.counts[i][i]).sum()
    }

    /// `trace / total` (0 for an empty matrix).
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            total => self.trace() as f64 / total as f64,
        }
    }

    /// CSV with class names heading both the columns and the rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for c in StyleClass::ALL {
            out.push(',');
            out.push_str(c.name());
        }
        out.push('\n');
        for truth in StyleClass::ALL {
            out.push_str(truth.name());
            for n in self.counts[truth.ordinal()] {
                out.push_str(&format!(",{n}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Accuracy and confusion matrix over `(true, argmax)` pairs.
pub fn evaluate(predictions: &[Prediction]) -> Result<(f64, ConfusionMatrix), EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut matrix = ConfusionMatrix::default();
    for p in predictions {
        matrix.counts[p.true_class.ordinal()][p.predicted().ordinal()] += 1;
    }
    Ok((matrix.accuracy(), matrix))
}

/// Each row divided by its sum; empty rows stay zero.
pub fn confusion_rates(matrix: &ConfusionMatrix) -> [[f64; 9]; 9] {
    let mut rates = [[0.0; 9]; 9];
    for (row, counts) in rates.iter_mut().zip(&matrix.counts) {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            continue;
        }
        for (r, &c) in row.iter_mut().zip(counts) {
            *r = c as f64 / total as f64;
        }
    }
    rates
}

#[derive(Debug, Clone, PartialEq)]
pub struct Misclassification {
    pub painting_id: String,
    pub true_class: StyleClass,
    pub predicted: StyleClass,
    pub probability: f64,
}

/// The `k` most confident wrong predictions, by descending predicted-class
/// probability, ties broken by painting id.
pub fn top_misclassifications(predictions: &[Prediction], k: usize) -> Vec<Misclassification> {
    let mut wrong: Vec<Misclassification> = predictions
        .iter()
        .filter(|p| !p.is_correct())
        .map(|p| Misclassification {
            painting_id: p.painting_id.clone(),
            true_class: p.true_class,
            predicted: p.predicted(),
            probability: p.predicted_probability(),
        })
        .collect();
    wrong.sort_by(|a, b| {
        b.probability
            .partial_cmp(&a.probability)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.painting_id.cmp(&b.painting_id))
    });
    wrong.truncate(k);
    wrong
}

/// `painting_id,true,predicted,probability` CSV.
pub fn misclassifications_csv(items: &[Misclassification]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["painting_id", "true", "predicted", "probability"])
        .expect("writing to a Vec cannot fail");
    for m in items {
        writer
            .write_record([
                m.painting_id.as_str(),
                m.true_class.name(),
                m.predicted.name(),
                m.probability.to_string().as_str(),
            ])
            .expect("writing to a Vec cannot fail");
    }
    String::from_utf8(writer.into_inner().expect("flushing a Vec cannot fail"))
        .expect("csv output is UTF-8")
}

/// Predictions whose argmax is `predicted`, used to build fixtures.
pub fn one_hot_prediction(painting_id: String, true_class: StyleClass, predicted: StyleClass) -> Prediction {
    let mut probabilities = [0.0; 9];
    probabilities[predicted.ordinal()] = 1.0;
    Prediction {
        painting_id,
        true_class,
        probabilities,
    }
}
