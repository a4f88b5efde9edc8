//! Accuracy metrics and the k-attributes-correct distribution.
//!
//! Malignancy is scored by exact match of the argmax; an attribute prediction
//! counts as correct when it lies within one ordinal level of the truth.

mod ablation;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::predictor::HierarchicalPredictor;

pub use ablation::{
    AblationCell, AblationResult, AblationRow, align, budget_config, run_ablation, standard_grid,
};

/// The ±1 rule.
pub fn attribute_correct(pred_label: usize, true_label: usize) -> bool {
    pred_label.abs_diff(true_label) <= 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_samples: usize,
    /// Percent.
    pub malignancy_accuracy: f64,
    pub attribute_names: Vec<String>,
    /// Percent, ±1 rule.
    pub per_attribute_accuracy: Vec<f64>,
    /// Percent, exact match.
    pub per_attribute_exact: Vec<f64>,
    /// P(K = k) for k = 0..=M from the marginal ±1 accuracies
    /// (Poisson-binomial, attributes treated as independent).
    pub k_correct_probs: Vec<f64>,
    /// Fraction of samples with exactly k attributes correct, k = 0..=M.
    pub k_correct_empirical: Vec<f64>,
}

/// Scores `pred` on the given dataset rows.
pub fn evaluate(pred: &HierarchicalPredictor, dataset: &Dataset, rows: &[usize]) -> Result<MetricReport> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("evaluation set is empty".into()));
    }
    if pred.dim() != dataset.dim() || pred.class_counts() != dataset.schema().class_counts() {
        return Err(Error::InvalidArgument("predictor does not match dataset shape".into()));
    }
    let m = dataset.schema().len();
    let mut mal_hits = 0usize;
    let mut within = vec![0usize; m];
    let mut exact = vec![0usize; m];
    let mut k_hist = vec![0usize; m + 1];
    for &row in rows {
        let predicted = pred.predict(dataset.features().row(row)).to_record();
        let truth = dataset.record(row);
        mal_hits += usize::from(predicted.malignancy == truth.malignancy);
        let mut k = 0;
        for (i, (&p, &t)) in predicted.attributes.iter().zip(&truth.attributes).enumerate() {
            if attribute_correct(p, t) {
                within[i] += 1;
                k += 1;
            }
            exact[i] += usize::from(p == t);
        }
        k_hist[k] += 1;
    }
    let n = rows.len() as f64;
    let pct = |c: usize| 100.0 * c as f64 / n;
    let per_attribute_accuracy: Vec<f64> = within.iter().map(|&c| pct(c)).collect();
    let marginals: Vec<f64> = within.iter().map(|&c| c as f64 / n).collect();
    Ok(MetricReport {
        n_samples: rows.len(),
        malignancy_accuracy: pct(mal_hits),
        attribute_names: dataset.schema().names().map(str::to_string).collect(),
        per_attribute_exact: exact.iter().map(|&c| pct(c)).collect(),
        k_correct_probs: k_correct_distribution(&marginals),
        k_correct_empirical: k_hist.iter().map(|&c| c as f64 / n).collect(),
        per_attribute_accuracy,
    })
}

/// Distribution of the number of successes among independent Bernoulli
/// trials with success probabilities `p`, by iterated convolution.
pub fn k_correct_distribution(p: &[f64]) -> Vec<f64> {
    let mut dist = vec![1.0];
    for &pi in p {
        let mut next = vec![0.0; dist.len() + 1];
        for (k, &d) in dist.iter().enumerate() {
            next[k] += d * (1.0 - pi);
            next[k + 1] += d * pi;
        }
        dist = next;
    }
    dist
}

/// Per-attribute accuracies with unreported entries (`None`) counted as
/// perfect, for comparisons against published tables with gaps.
pub fn fill_unreported(accuracies: &[Option<f64>]) -> Vec<f64> {
    accuracies.iter().map(|a| a.unwrap_or(1.0)).collect()
}
