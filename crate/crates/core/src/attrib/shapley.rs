//! Permutation-sampling Shapley value estimation.
//!
//! For each sampled permutation and background row, features are switched
//! from the background value to the explained instance's value in
//! permutation order; the score differences accumulate into an unbiased
//! estimate of each feature's Shapley value of the score function. Per-
//! feature standard errors come from the per-permutation contribution
//! variance.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::data::{Dataset, Instance};
use crate::model::{ModelError, PredictionModel};

/// Per-feature importance aligned to the schema, with sampling diagnostics.
#[derive(Debug, Clone)]
pub struct Attribution {
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub samples: usize,
}

/// Estimate Shapley values of `model`'s score at `orig` against a
/// background dataset.
///
/// `samples` counts permutations; each costs `n_features + 1` model
/// evaluations, batched for bridge efficiency. Deterministic under `seed`.
pub fn shapley_estimate(
    model: &PredictionModel,
    orig: &Instance,
    background: &Dataset,
    samples: usize,
    seed: u64,
) -> Result<Attribution, ModelError> {
    assert!(samples >= 1, "samples must be >= 1");
    assert!(!background.is_empty(), "background must be non-empty");
    let nf = orig.values.len();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    // Welford accumulators over per-permutation contributions
    let mut mean = vec![0.0f64; nf];
    let mut m2 = vec![0.0f64; nf];
    let mut done = 0usize;

    let chunk = (2048 / (nf + 1)).max(1);
    let mut perms: Vec<Vec<usize>> = Vec::with_capacity(chunk);
    let mut batch: Vec<Instance> = Vec::with_capacity(chunk * (nf + 1));

    while done < samples {
        let take = chunk.min(samples - done);
        perms.clear();
        batch.clear();
        for _ in 0..take {
            let mut perm: Vec<usize> = (0..nf).collect();
            for i in (1..nf).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            let row = rng.gen_range(0..background.len());
            let mut current = background.instances[row].values.clone();
            batch.push(Instance {
                id: String::new(),
                values: current.clone(),
            });
            for &f in &perm {
                current[f] = orig.values[f];
                batch.push(Instance {
                    id: String::new(),
                    values: current.clone(),
                });
            }
            perms.push(perm);
        }
        let scores = model.predict(&batch)?;
        for (pi, perm) in perms.iter().enumerate() {
            let base = pi * (nf + 1);
            for (step, &f) in perm.iter().enumerate() {
                let contribution = scores[base + step + 1] - scores[base + step];
                let n = (done + pi + 1) as f64;
                let delta = contribution - mean[f];
                mean[f] += delta / n;
                m2[f] += delta * (contribution - mean[f]);
            }
        }
        done += take;
    }

    let std_errors = m2
        .iter()
        .map(|&v| {
            if done > 1 {
                (v / (done - 1) as f64 / done as f64).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(Attribution {
        values: mean,
        std_errors,
        samples: done,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::testutil::{make_dataset, num};
    use crate::data::FeatureKind;
    use crate::model::{ModelError, Scorer};

    /// In-process additive scorer for closed-form checks.
    struct Additive {
        weights: Vec<f64>,
        bias: f64,
    }

    impl Scorer for Additive {
        fn score_batch(&self, batch: &[Instance]) -> Result<Vec<f64>, ModelError> {
            Ok(batch
                .iter()
                .map(|i| {
                    self.weights
                        .iter()
                        .zip(i.values.iter())
                        .map(|(w, v)| w * v.as_num())
                        .sum::<f64>()
                        + self.bias
                })
                .collect())
        }

        fn tag(&self) -> &str {
            "additive"
        }
    }

    fn background_at_zero() -> Dataset {
        make_dataset(
            "bg",
            vec![
                ("x1", FeatureKind::Numeric, vec![]),
                ("x2", FeatureKind::Numeric, vec![]),
            ],
            vec![
                (vec![num(0.0), num(0.0)], false),
                (vec![num(0.0), num(0.0)], true),
            ],
        )
    }

    #[test]
    fn additive_model_matches_closed_form() {
        // f(x) = 0.4 x1 - 0.2 x2 + 0.5 keeps scores inside [0, 1] on the
        // orig/background mixes; Shapley of an additive f is w_i (x_i - E[x_i])
        let model = PredictionModel::new(
            Box::new(Additive {
                weights: vec![0.4, -0.2],
                bias: 0.5,
            }),
            0.5,
        );
        let orig = Instance {
            id: "o".into(),
            values: vec![num(1.0), num(1.0)],
        };
        let attr = shapley_estimate(&model, &orig, &background_at_zero(), 2000, 9).unwrap();
        assert!((attr.values[0] - 0.4).abs() < 3.0 * attr.std_errors[0].max(1e-9));
        assert!((attr.values[1] + 0.2).abs() < 3.0 * attr.std_errors[1].max(1e-9));
        // additive models have zero-variance contributions
        assert!(attr.std_errors[0] < 1e-12);
    }

    #[test]
    fn dummy_feature_gets_zero() {
        let model = PredictionModel::new(
            Box::new(Additive {
                weights: vec![0.3, 0.0],
                bias: 0.2,
            }),
            0.5,
        );
        let orig = Instance {
            id: "o".into(),
            values: vec![num(1.0), num(1.0)],
        };
        let attr = shapley_estimate(&model, &orig, &background_at_zero(), 500, 1).unwrap();
        assert_eq!(attr.values[1], 0.0);
    }

    #[test]
    fn orig_equal_to_background_is_all_zero() {
        let model = PredictionModel::new(
            Box::new(Additive {
                weights: vec![0.4, -0.2],
                bias: 0.5,
            }),
            0.5,
        );
        let orig = Instance {
            id: "o".into(),
            values: vec![num(0.0), num(0.0)],
        };
        let attr = shapley_estimate(&model, &orig, &background_at_zero(), 200, 2).unwrap();
        assert_eq!(attr.values, vec![0.0, 0.0]);
    }

    /// Exact Shapley values by full coalition enumeration with the same
    /// value function (mean over background rows).
    fn exact_shapley(model: &PredictionModel, orig: &Instance, background: &Dataset) -> Vec<f64> {
        let nf = orig.values.len();
        let value = |mask: u32| -> f64 {
            let mut total = 0.0;
            for bg in &background.instances {
                let mut values = bg.values.clone();
                for f in 0..nf {
                    if mask & (1 << f) != 0 {
                        values[f] = orig.values[f];
                    }
                }
                total += model
                    .predict_one(&Instance {
                        id: String::new(),
                        values,
                    })
                    .unwrap();
            }
            total / background.len() as f64
        };
        let fact = |n: usize| -> f64 { (1..=n).map(|i| i as f64).product::<f64>().max(1.0) };
        let mut out = vec![0.0; nf];
        for f in 0..nf {
            for mask in 0u32..(1 << nf) {
                if mask & (1 << f) != 0 {
                    continue;
                }
                let s = (mask.count_ones()) as usize;
                let weight = fact(s) * fact(nf - s - 1) / fact(nf);
                out[f] += weight * (value(mask | (1 << f)) - value(mask));
            }
        }
        out
    }

    #[test]
    fn sampling_stays_within_three_standard_errors_of_enumeration() {
        // non-additive model so the check is not trivial: interaction term
        struct Interacting;
        impl Scorer for Interacting {
            fn score_batch(&self, batch: &[Instance]) -> Result<Vec<f64>, ModelError> {
                Ok(batch
                    .iter()
                    .map(|i| {
                        let a = i.values[0].as_num();
                        let b = i.values[1].as_num();
                        let c = i.values[2].as_num();
                        (0.2 * a + 0.3 * b * c + 0.1).clamp(0.0, 1.0)
                    })
                    .collect())
            }
            fn tag(&self) -> &str {
                "interacting"
            }
        }
        let model = PredictionModel::new(Box::new(Interacting), 0.5);
        let background = make_dataset(
            "bg3",
            vec![
                ("a", FeatureKind::Numeric, vec![]),
                ("b", FeatureKind::Numeric, vec![]),
                ("c", FeatureKind::Numeric, vec![]),
            ],
            vec![
                (vec![num(0.0), num(0.2), num(0.4)], false),
                (vec![num(0.5), num(0.0), num(0.1)], true),
            ],
        );
        let orig = Instance {
            id: "o".into(),
            values: vec![num(1.0), num(1.0), num(1.0)],
        };
        let exact = exact_shapley(&model, &orig, &background);
        let attr = shapley_estimate(&model, &orig, &background, 4000, 3).unwrap();
        for f in 0..3 {
            let tol = 3.0 * attr.std_errors[f].max(1e-9);
            assert!(
                (attr.values[f] - exact[f]).abs() <= tol,
                "feature {f}: {} vs exact {} (tol {tol})",
                attr.values[f],
                exact[f]
            );
        }
        // efficiency: contributions sum to f(orig) - E[f(background)]
        let sum: f64 = attr.values.iter().sum();
        let f_orig = model.predict_one(&orig).unwrap();
        let f_bg: f64 = background
            .instances
            .iter()
            .map(|i| model.predict_one(i).unwrap())
            .sum::<f64>()
            / background.len() as f64;
        assert!((sum - (f_orig - f_bg)).abs() < 0.02);
    }
}
