//! Bagged CART ensemble over the min-max/one-hot encoding.
//!
//! Trees split on encoded dimensions with the Gini criterion; one-hot
//! columns make categorical splits "is category c" at threshold 0.5. The
//! ensemble score is the fraction of trees voting positive, so with
//! `n_trees = 1` the score is exactly 0 or 1.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, PredictionModel, Scorer};
use crate::data::{Dataset, Encoder, Instance};
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of encoded dimensions tried per split; `None` uses the
    /// square-root rule.
    pub feature_subsample: Option<f64>,
    pub seed: u64,
    /// Label rule threshold for the resulting model.
    pub threshold: f64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 12,
            min_leaf: 2,
            feature_subsample: None,
            seed: 0,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        dim: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        positive: bool,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn vote(&self, x: &[f64]) -> bool {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { positive } => return *positive,
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*dim] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

pub struct Forest {
    trees: Vec<Tree>,
    encoder: Encoder,
    n_features: usize,
}

impl Forest {
    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}

impl Scorer for Forest {
    fn score_batch(&self, batch: &[Instance]) -> Result<Vec<f64>, ModelError> {
        let mut out = Vec::with_capacity(batch.len());
        let mut encoded = vec![0.0; self.encoder.width()];
        for inst in batch {
            if inst.values.len() != self.n_features {
                return Err(ModelError::SchemaMismatch(format!(
                    "expected {} features, got {}",
                    self.n_features,
                    inst.values.len()
                )));
            }
            self.encoder.encode_into(inst, &mut encoded);
            let votes = self.trees.iter().filter(|t| t.vote(&encoded)).count();
            out.push(votes as f64 / self.trees.len() as f64);
        }
        Ok(out)
    }

    fn tag(&self) -> &str {
        "forest"
    }
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [bool],
    min_leaf: usize,
    n_candidates: usize,
    nodes: Vec<Node>,
}

impl<'a> TreeBuilder<'a> {
    fn leaf(&mut self, indices: &[usize]) -> usize {
        let pos = indices.iter().filter(|&&i| self.labels[i]).count();
        // strict majority votes positive; ties vote negative
        self.nodes.push(Node::Leaf {
            positive: pos * 2 > indices.len(),
        });
        self.nodes.len() - 1
    }

    fn best_split(
        &self,
        indices: &[usize],
        candidates: &[usize],
    ) -> Option<(usize, f64, f64)> {
        let total = indices.len();
        let mut best: Option<(f64, usize, f64)> = None;
        for &dim in candidates {
            let mut ordered: Vec<usize> = indices.to_vec();
            ordered.sort_by(|&a, &b| {
                self.rows[a][dim]
                    .partial_cmp(&self.rows[b][dim])
                    .expect("finite encodings")
            });
            let mut left_pos = 0usize;
            let total_pos = indices.iter().filter(|&&i| self.labels[i]).count();
            for k in 1..total {
                if self.labels[ordered[k - 1]] {
                    left_pos += 1;
                }
                let lo = self.rows[ordered[k - 1]][dim];
                let hi = self.rows[ordered[k]][dim];
                if lo == hi {
                    continue;
                }
                if k < self.min_leaf || total - k < self.min_leaf {
                    continue;
                }
                let threshold = lo + (hi - lo) / 2.0;
                let score = (k as f64 * gini(left_pos, k)
                    + (total - k) as f64 * gini(total_pos - left_pos, total - k))
                    / total as f64;
                let better = match best {
                    None => true,
                    Some((s, d, t)) => {
                        score < s || (score == s && (dim < d || (dim == d && threshold < t)))
                    }
                };
                if better {
                    best = Some((score, dim, threshold));
                }
            }
        }
        best.map(|(s, d, t)| (d, t, s))
    }

    fn build(&mut self, indices: &[usize], depth: usize, rng: &mut impl Rng) -> usize {
        let pos = indices.iter().filter(|&&i| self.labels[i]).count();
        if depth == 0 || pos == 0 || pos == indices.len() || indices.len() < 2 * self.min_leaf {
            return self.leaf(indices);
        }
        let width = self.rows[0].len();
        let mut dims: Vec<usize> = (0..width).collect();
        // partial Fisher-Yates for the candidate subset
        for i in 0..self.n_candidates.min(width) {
            let j = rng.gen_range(i..width);
            dims.swap(i, j);
        }
        let mut candidates = dims[..self.n_candidates.min(width)].to_vec();
        candidates.sort_unstable();
        let split = match self.best_split(indices, &candidates) {
            Some(s) => Some(s),
            // fall back to all dimensions so a usable split is not missed
            None if self.n_candidates < width => {
                let all: Vec<usize> = (0..width).collect();
                self.best_split(indices, &all)
            }
            None => None,
        };
        let Some((dim, threshold, _)) = split else {
            return self.leaf(indices);
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .iter()
            .partition(|&&i| self.rows[i][dim] <= threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { positive: false }); // placeholder
        let left = self.build(&left_idx, depth - 1, rng);
        let right = self.build(&right_idx, depth - 1, rng);
        self.nodes[slot] = Node::Split {
            dim,
            threshold,
            left,
            right,
        };
        slot
    }
}

/// Train a bagged ensemble of Gini CART trees.
///
/// Deterministic under the config seed. Requires at least two instances of
/// each class.
pub fn train_forest(train: &Dataset, cfg: &ForestConfig) -> Result<PredictionModel, ModelError> {
    let pos = train.labels.iter().filter(|l| **l).count();
    let neg = train.len() - pos;
    if pos < 2 || neg < 2 {
        return Err(ModelError::DegenerateLabels);
    }
    assert!(cfg.n_trees >= 1 && cfg.max_depth >= 1);

    let encoder = Encoder::fit(train);
    let rows: Vec<Vec<f64>> = train.instances.iter().map(|i| encoder.encode(i)).collect();
    let width = encoder.width();
    let n_candidates = match cfg.feature_subsample {
        Some(frac) => ((frac * width as f64).round() as usize).clamp(1, width),
        None => ((width as f64).sqrt().round() as usize).clamp(1, width),
    };

    let n = train.len();
    let mut trees = Vec::with_capacity(cfg.n_trees);
    for t in 0..cfg.n_trees {
        let mut rng = seeded_rng(cfg.seed, &["forest", &t.to_string()]);
        let bag: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let mut builder = TreeBuilder {
            rows: &rows,
            labels: &train.labels,
            min_leaf: cfg.min_leaf,
            n_candidates,
            nodes: Vec::new(),
        };
        let root = builder.build(&bag, cfg.max_depth, &mut rng);
        debug_assert_eq!(root, 0);
        trees.push(Tree {
            nodes: builder.nodes,
        });
    }

    Ok(PredictionModel::new(
        Box::new(Forest {
            trees,
            encoder,
            n_features: train.n_features(),
        }),
        cfg.threshold,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testutil::{make_dataset, num};
    use crate::data::{FeatureKind, FeatureValue};

    fn separable_toy() -> Dataset {
        // two informative numeric features, classes split at x = 0 with a
        // wide margin on both dimensions
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.push((vec![num(-5.0 - i as f64), num(-3.0 - i as f64)], false));
            rows.push((vec![num(5.0 + i as f64), num(3.0 + i as f64)], true));
        }
        make_dataset(
            "toy",
            vec![
                ("x", FeatureKind::Numeric, vec![]),
                ("y", FeatureKind::Numeric, vec![]),
            ],
            rows,
        )
    }

    #[test]
    fn separable_set_reaches_perfect_training_accuracy() {
        let d = separable_toy();
        let model = train_forest(&d, &ForestConfig::default()).unwrap();
        // oracle: check every training point's vote against its label
        let labels = model.predict_labels(&d.instances).unwrap();
        assert_eq!(labels, d.labels);
    }

    #[test]
    fn single_class_training_is_rejected() {
        let rows: Vec<(Vec<FeatureValue>, bool)> =
            (0..6).map(|i| (vec![num(i as f64)], true)).collect();
        let d = make_dataset("bad", vec![("x", FeatureKind::Numeric, vec![])], rows);
        assert!(matches!(
            train_forest(&d, &ForestConfig::default()),
            Err(ModelError::DegenerateLabels)
        ));
    }

    #[test]
    fn single_stump_scores_zero_or_one() {
        let d = separable_toy();
        let cfg = ForestConfig {
            n_trees: 1,
            max_depth: 1,
            seed: 3,
            ..ForestConfig::default()
        };
        let model = train_forest(&d, &cfg).unwrap();
        for s in model.predict(&d.instances).unwrap() {
            assert!(s == 0.0 || s == 1.0);
        }
        // oracle: trace the stump for a far-positive point
        let s = model
            .predict_one(&Instance {
                id: "p".into(),
                values: vec![num(30.0), num(30.0)],
            })
            .unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn forest_score_is_vote_fraction_and_batches_are_consistent() {
        let d = separable_toy();
        let cfg = ForestConfig {
            n_trees: 7,
            ..ForestConfig::default()
        };
        let model = train_forest(&d, &cfg).unwrap();
        let one = model.predict_one(&d.instances[0]).unwrap();
        assert_eq!((one * 7.0).fract(), 0.0);
        let twice = model
            .predict(&[d.instances[0].clone(), d.instances[0].clone()])
            .unwrap();
        assert_eq!(twice[0], twice[1]);
        assert!(model.predict(&[]).unwrap().is_empty());
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let d = separable_toy();
        let model = train_forest(&d, &ForestConfig::default()).unwrap();
        let bad = Instance {
            id: "b".into(),
            values: vec![num(1.0)],
        };
        assert!(matches!(
            model.predict(&[bad]),
            Err(ModelError::SchemaMismatch(_))
        ));
    }
}
