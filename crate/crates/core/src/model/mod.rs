//! Binary probabilistic classifiers behind a single scoring abstraction.
//!
//! Everything downstream (generators, attributions, the audit pipeline)
//! only sees [`PredictionModel`]: a batch scorer returning `P(positive)` in
//! `[0, 1]` plus a label threshold. The built-in implementation is a bagged
//! decision-tree ensemble ([`forest`]); [`bridge`] adapts any external
//! process speaking the line-delimited JSON protocol, so the whole audit
//! runs identically against either.

pub mod bridge;
pub mod forest;

use thiserror::Error;

use crate::data::Instance;

pub use bridge::{bridge_model, BridgeConfig, BridgeError};
pub use forest::{train_forest, Forest, ForestConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set contains a class with fewer than 2 instances")]
    DegenerateLabels,
    #[error("instance does not conform to the model schema: {0}")]
    SchemaMismatch(String),
    #[error("test set contains a single class; AUC undefined")]
    SingleClassTest,
    #[error(transparent)]
    Bridge(#[from] BridgeError),
}

/// Batch scorer: one `P(positive)` per instance, order-preserving.
pub trait Scorer: Send + Sync {
    fn score_batch(&self, batch: &[Instance]) -> Result<Vec<f64>, ModelError>;
    /// Short tag for manifests ("forest", "bridge").
    fn tag(&self) -> &str;
}

/// A trained binary scorer plus the label rule `score >= threshold`.
pub struct PredictionModel {
    scorer: Box<dyn Scorer>,
    pub threshold: f64,
}

impl PredictionModel {
    pub fn new(scorer: Box<dyn Scorer>, threshold: f64) -> Self {
        PredictionModel { scorer, threshold }
    }

    pub fn predict(&self, batch: &[Instance]) -> Result<Vec<f64>, ModelError> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let scores = self.scorer.score_batch(batch)?;
        debug_assert_eq!(scores.len(), batch.len());
        Ok(scores)
    }

    pub fn predict_one(&self, instance: &Instance) -> Result<f64, ModelError> {
        Ok(self.predict(std::slice::from_ref(instance))?[0])
    }

    pub fn label(&self, score: f64) -> bool {
        score >= self.threshold
    }

    pub fn predict_labels(&self, batch: &[Instance]) -> Result<Vec<bool>, ModelError> {
        Ok(self.predict(batch)?.iter().map(|s| self.label(*s)).collect())
    }

    pub fn tag(&self) -> &str {
        self.scorer.tag()
    }
}

/// Area under the ROC curve on a labeled dataset.
///
/// Computed from average ranks, which equals the probability that a random
/// positive outranks a random negative with ties counting one half.
pub fn auc(model: &PredictionModel, test: &crate::data::Dataset) -> Result<f64, ModelError> {
    let scores = model.predict(&test.instances)?;
    auc_from_scores(&scores, &test.labels)
}

pub fn auc_from_scores(scores: &[f64], labels: &[bool]) -> Result<f64, ModelError> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ModelError::SingleClassTest);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // average ranks over tie groups, 1-based
    let mut ranks = vec![0.0f64; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let rank_sum: f64 = labels
        .iter()
        .zip(ranks.iter())
        .filter(|(l, _)| **l)
        .map(|(_, r)| *r)
        .sum();
    let numer = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(numer / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_matches_pair_enumeration_example() {
        // negatives score 0.1 and 0.4, positives 0.35 and 0.8:
        // of the 4 pos-neg pairs, 3 are wins -> 0.75
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [false, false, true, true];
        assert_eq!(auc_from_scores(&scores, &labels).unwrap(), 0.75);
    }

    #[test]
    fn auc_edge_cases() {
        assert_eq!(
            auc_from_scores(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
            1.0
        );
        assert_eq!(
            auc_from_scores(&[0.5, 0.5, 0.5], &[false, true, false]).unwrap(),
            0.5
        );
        assert!(matches!(
            auc_from_scores(&[0.5, 0.6], &[true, true]),
            Err(ModelError::SingleClassTest)
        ));
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let scores = [0.11, 0.92, 0.35, 0.48, 0.27, 0.66];
        let labels = [false, true, false, true, false, true];
        let base = auc_from_scores(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| s.powi(3) * 0.5).collect();
        assert_eq!(auc_from_scores(&squashed, &labels).unwrap(), base);
    }
}
