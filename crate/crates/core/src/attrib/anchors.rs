//! Greedy anchor rules.
//!
//! A rule is a set of feature predicates (category equality, or the train
//! quartile interval containing the explained value) grown greedily until
//! the sampled precision reaches the target. Precision is estimated on a
//! fixed matrix of marginal perturbation draws shared by every candidate
//! rule: anchored features are pinned to the explained instance's values,
//! free features take the drawn values. Shared draws make candidate
//! comparisons paired and keep the search deterministic under the seed.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::analysis::quantile;
use crate::data::{Dataset, FeatureValue, Instance};
use crate::model::{ModelError, PredictionModel};

const PRECISION_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AnchorCondition {
    /// Categorical: feature equals this category id.
    Equals(u32),
    /// Numeric: `lo < x <= hi`, open ends when absent.
    Interval { lo: Option<f64>, hi: Option<f64> },
}

#[derive(Debug, Clone, Serialize)]
pub struct AnchorPredicate {
    pub feature: usize,
    pub condition: AnchorCondition,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnchorRule {
    pub predicates: Vec<AnchorPredicate>,
    pub precision_estimate: f64,
    pub coverage_estimate: f64,
}

fn interval_for(train: &Dataset, feature: usize, value: f64) -> AnchorCondition {
    let mut xs: Vec<f64> = train
        .instances
        .iter()
        .map(|i| i.values[feature].as_num())
        .collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
    let q1 = quantile(&xs, 0.25);
    let q2 = quantile(&xs, 0.5);
    let q3 = quantile(&xs, 0.75);
    if value <= q1 {
        AnchorCondition::Interval {
            lo: None,
            hi: Some(q1),
        }
    } else if value <= q2 {
        AnchorCondition::Interval {
            lo: Some(q1),
            hi: Some(q2),
        }
    } else if value <= q3 {
        AnchorCondition::Interval {
            lo: Some(q2),
            hi: Some(q3),
        }
    } else {
        AnchorCondition::Interval {
            lo: Some(q3),
            hi: None,
        }
    }
}

fn satisfies(condition: &AnchorCondition, value: &FeatureValue) -> bool {
    match (condition, value) {
        (AnchorCondition::Equals(c), FeatureValue::Cat(v)) => c == v,
        (AnchorCondition::Interval { lo, hi }, FeatureValue::Num(x)) => {
            lo.map_or(true, |l| *x > l) && hi.map_or(true, |h| *x <= h)
        }
        _ => false,
    }
}

struct PrecisionSampler<'a> {
    model: &'a PredictionModel,
    train: &'a Dataset,
    orig: &'a Instance,
    orig_label: bool,
    /// row indices drawn per (sample, feature)
    draws: Vec<Vec<usize>>,
}

impl<'a> PrecisionSampler<'a> {
    fn new(
        model: &'a PredictionModel,
        train: &'a Dataset,
        orig: &'a Instance,
        orig_label: bool,
        seed: u64,
    ) -> PrecisionSampler<'a> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let nf = orig.values.len();
        let draws = (0..PRECISION_SAMPLES)
            .map(|_| (0..nf).map(|_| rng.gen_range(0..train.len())).collect())
            .collect();
        PrecisionSampler {
            model,
            train,
            orig,
            orig_label,
            draws,
        }
    }

    /// Fraction of perturbations keeping the original label when the
    /// anchored features are pinned to the original's values.
    fn precision(&self, anchored: &[usize]) -> Result<f64, ModelError> {
        let nf = self.orig.values.len();
        let batch: Vec<Instance> = self
            .draws
            .iter()
            .map(|rows| {
                let mut values = Vec::with_capacity(nf);
                for f in 0..nf {
                    values.push(if anchored.contains(&f) {
                        self.orig.values[f]
                    } else {
                        self.train.instances[rows[f]].values[f]
                    });
                }
                Instance {
                    id: String::new(),
                    values,
                }
            })
            .collect();
        let scores = self.model.predict(&batch)?;
        let kept = scores
            .iter()
            .filter(|&&s| self.model.label(s) == self.orig_label)
            .count();
        Ok(kept as f64 / scores.len() as f64)
    }
}

/// Grow an anchor rule greedily until the sampled precision reaches
/// `precision_target` or every feature is anchored. A degenerate rule over
/// all features is legal; a target of 0 accepts the empty rule.
pub fn anchor_rule(
    model: &PredictionModel,
    orig: &Instance,
    train: &Dataset,
    precision_target: f64,
    seed: u64,
) -> Result<AnchorRule, ModelError> {
    let orig_label = model.label(model.predict_one(orig)?);
    let sampler = PrecisionSampler::new(model, train, orig, orig_label, seed);
    let nf = orig.values.len();

    let mut anchored: Vec<usize> = Vec::new();
    let mut precision = sampler.precision(&anchored)?;
    while precision < precision_target && anchored.len() < nf {
        let mut best: Option<(f64, usize)> = None;
        for f in 0..nf {
            if anchored.contains(&f) {
                continue;
            }
            let mut trial = anchored.clone();
            trial.push(f);
            let p = sampler.precision(&trial)?;
            if best.map_or(true, |(bp, _)| p > bp) {
                best = Some((p, f));
            }
        }
        let Some((p, f)) = best else { break };
        anchored.push(f);
        precision = p;
    }
    anchored.sort_unstable();

    let predicates: Vec<AnchorPredicate> = anchored
        .iter()
        .map(|&f| {
            let condition = match orig.values[f] {
                FeatureValue::Cat(c) => AnchorCondition::Equals(c),
                FeatureValue::Num(x) => interval_for(train, f, x),
            };
            AnchorPredicate {
                feature: f,
                condition,
            }
        })
        .collect();

    let covered = train
        .instances
        .iter()
        .filter(|inst| {
            predicates
                .iter()
                .all(|p| satisfies(&p.condition, &inst.values[p.feature]))
        })
        .count();
    let coverage_estimate = covered as f64 / train.len() as f64;

    Ok(AnchorRule {
        predicates,
        precision_estimate: precision,
        coverage_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testutil::{cat, make_dataset, num};
    use crate::data::FeatureKind;
    use crate::model::Scorer;

    struct Constant(f64);
    impl Scorer for Constant {
        fn score_batch(&self, batch: &[Instance]) -> Result<Vec<f64>, ModelError> {
            Ok(vec![self.0; batch.len()])
        }
        fn tag(&self) -> &str {
            "constant"
        }
    }

    struct StumpOn {
        feature: usize,
        threshold: f64,
    }
    impl Scorer for StumpOn {
        fn score_batch(&self, batch: &[Instance]) -> Result<Vec<f64>, ModelError> {
            Ok(batch
                .iter()
                .map(|i| {
                    if i.values[self.feature].as_num() > self.threshold {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect())
        }
        fn tag(&self) -> &str {
            "stump"
        }
    }

    fn spread_train() -> Dataset {
        // 5 negatives at -5..-1, 15 positives at 1..15; the quartile
        // interval containing x = 3 is (0.5, 5.5], inside the positive region
        let xs: Vec<f64> = (-5..0).chain(1..16).map(|i| i as f64).collect();
        let rows: Vec<(Vec<FeatureValue>, bool)> = xs
            .into_iter()
            .enumerate()
            .map(|(i, x)| (vec![num(x), num(i as f64)], x > 0.0))
            .collect();
        make_dataset(
            "sp",
            vec![
                ("x", FeatureKind::Numeric, vec![]),
                ("noise", FeatureKind::Numeric, vec![]),
            ],
            rows,
        )
    }

    #[test]
    fn constant_model_yields_empty_rule_with_full_precision() {
        let model = PredictionModel::new(Box::new(Constant(0.9)), 0.5);
        let train = spread_train();
        let orig = Instance {
            id: "o".into(),
            values: vec![num(1.0), num(2.0)],
        };
        let rule = anchor_rule(&model, &orig, &train, 0.95, 4).unwrap();
        assert!(rule.predicates.is_empty());
        assert_eq!(rule.precision_estimate, 1.0);
        assert_eq!(rule.coverage_estimate, 1.0);
    }

    #[test]
    fn zero_target_accepts_empty_rule_immediately() {
        let model = PredictionModel::new(
            Box::new(StumpOn {
                feature: 0,
                threshold: 0.0,
            }),
            0.5,
        );
        let train = spread_train();
        let orig = Instance {
            id: "o".into(),
            values: vec![num(3.0), num(2.0)],
        };
        let rule = anchor_rule(&model, &orig, &train, 0.0, 4).unwrap();
        assert!(rule.predicates.is_empty());
    }

    #[test]
    fn stump_gets_single_predicate_on_the_read_feature() {
        let model = PredictionModel::new(
            Box::new(StumpOn {
                feature: 0,
                threshold: 0.0,
            }),
            0.5,
        );
        let train = spread_train();
        // x = 3 sits above the train quartiles around 0, so the interval is
        // inside (0, inf) and pinning x gives precision 1.0 by construction
        let orig = Instance {
            id: "o".into(),
            values: vec![num(3.0), num(2.0)],
        };
        let rule = anchor_rule(&model, &orig, &train, 0.95, 4).unwrap();
        assert_eq!(rule.predicates.len(), 1);
        assert_eq!(rule.predicates[0].feature, 0);
        assert_eq!(rule.precision_estimate, 1.0);
        match rule.predicates[0].condition {
            AnchorCondition::Interval { lo: Some(lo), .. } => assert!(lo >= 0.0),
            ref other => panic!("expected bounded-below interval, got {other:?}"),
        }
    }

    /// Conjunction models: the label is positive iff every categorical
    /// literal holds. With pin-to-orig estimation on shared draws and an
    /// original satisfying the conjunction, adding a predicate can only
    /// turn more samples positive, so precision is monotone.
    #[test]
    fn precision_is_monotone_on_conjunction_models() {
        struct Conjunction {
            literals: Vec<(usize, u32)>,
        }
        impl Scorer for Conjunction {
            fn score_batch(&self, batch: &[Instance]) -> Result<Vec<f64>, ModelError> {
                Ok(batch
                    .iter()
                    .map(|i| {
                        let all = self
                            .literals
                            .iter()
                            .all(|&(f, c)| i.values[f].as_cat() == c);
                        if all {
                            1.0
                        } else {
                            0.0
                        }
                    })
                    .collect())
            }
            fn tag(&self) -> &str {
                "conj"
            }
        }

        let mut rows = Vec::new();
        for i in 0..32 {
            let values = vec![
                cat(i % 2),
                cat((i / 2) % 2),
                cat((i / 4) % 2),
                cat((i / 8) % 2),
            ];
            rows.push((values, i % 3 == 0));
        }
        let train = make_dataset(
            "conj",
            vec![
                ("a", FeatureKind::Categorical, vec!["0", "1"]),
                ("b", FeatureKind::Categorical, vec!["0", "1"]),
                ("c", FeatureKind::Categorical, vec!["0", "1"]),
                ("d", FeatureKind::Categorical, vec!["0", "1"]),
            ],
            rows,
        );

        for seed in 0..12u64 {
            let lit_count = 1 + (seed as usize % 3);
            let literals: Vec<(usize, u32)> =
                (0..lit_count).map(|f| (f, (seed as u32 + f as u32) % 2)).collect();
            let orig = Instance {
                id: "o".into(),
                values: (0..4)
                    .map(|f| {
                        let forced = literals.iter().find(|(lf, _)| *lf == f);
                        cat(forced.map_or(0, |&(_, c)| c))
                    })
                    .collect(),
            };
            let model = PredictionModel::new(Box::new(Conjunction { literals }), 0.5);
            let orig_label = model.label(model.predict_one(&orig).unwrap());
            assert!(orig_label, "orig satisfies the conjunction");
            let sampler = PrecisionSampler::new(&model, &train, &orig, orig_label, seed);
            // grow a rule feature by feature and demand monotone precision
            let mut anchored: Vec<usize> = Vec::new();
            let mut last = sampler.precision(&anchored).unwrap();
            for f in 0..4 {
                anchored.push(f);
                let p = sampler.precision(&anchored).unwrap();
                assert!(
                    p >= last,
                    "precision dropped from {last} to {p} when anchoring {f} (seed {seed})"
                );
                last = p;
            }
        }
    }
}
