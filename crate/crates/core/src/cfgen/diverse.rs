//! Diverse sampled counterfactual search (DiCE-style).
//!
//! Collects flipping candidates by seeded perturbation around the original
//! (a geometric number of features resampled from training marginals per
//! draw), selects a diverse subset of up to `k` by greedy maximin over
//! pairwise distances, and returns the candidate closest to the original
//! from that diverse set.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::data::{FeatureValue, Instance};
use crate::model::ModelError;

use super::{heterogeneous_distance, marginal_draw, Budget, GenerationContext};

const BATCH: usize = 32;

pub(super) fn dice(
    ctx: &GenerationContext,
    orig: &Instance,
    orig_label: bool,
    seed: u64,
    budget: &mut Budget,
) -> Result<Option<Vec<FeatureValue>>, ModelError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let nf = orig.values.len();
    let k = ctx.cfg.diversity_k.max(1);
    let pool_cap = 3 * k;
    // leave budget for other phases; sampling gets at most half the cap
    let eval_cap = (ctx.cfg.max_evaluations / 2).max(BATCH);

    let mut pool: Vec<(Vec<FeatureValue>, f64)> = Vec::new();
    let mut spent = 0usize;
    while pool.len() < pool_cap && spent < eval_cap {
        let mut batch_values = Vec::with_capacity(BATCH);
        for _ in 0..BATCH {
            // geometric ramp: usually small perturbations, occasionally broad
            let mut m = 1usize;
            while m < nf && rng.gen_bool(0.5) {
                m += 1;
            }
            let mut features: Vec<usize> = (0..nf).collect();
            for i in 0..m {
                let j = rng.gen_range(i..nf);
                features.swap(i, j);
            }
            let mut values = orig.values.clone();
            for &f in &features[..m] {
                values[f] = marginal_draw(ctx.train, f, &mut rng);
            }
            batch_values.push(values);
        }
        if !budget.try_spend(batch_values.len()) {
            break;
        }
        spent += batch_values.len();
        let batch: Vec<Instance> = batch_values
            .iter()
            .map(|values| Instance {
                id: String::new(),
                values: values.clone(),
            })
            .collect();
        let scores = ctx.model.predict(&batch)?;
        for (values, s) in batch_values.into_iter().zip(scores) {
            if ctx.model.label(s) != orig_label {
                let d = heterogeneous_distance(
                    &Instance {
                        id: String::new(),
                        values: values.clone(),
                    },
                    orig,
                    ctx.encoder,
                );
                pool.push((values, d));
                if pool.len() >= pool_cap {
                    break;
                }
            }
        }
    }

    if pool.is_empty() {
        return Ok(None);
    }

    // greedy maximin diversity seeded by the first-found candidate
    let dist = |a: &[FeatureValue], b: &[FeatureValue]| {
        heterogeneous_distance(
            &Instance {
                id: String::new(),
                values: a.to_vec(),
            },
            &Instance {
                id: String::new(),
                values: b.to_vec(),
            },
            ctx.encoder,
        )
    };
    let mut selected: Vec<usize> = vec![0];
    while selected.len() < k.min(pool.len()) {
        let mut best: Option<(f64, usize)> = None;
        for (i, (values, _)) in pool.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            let closeness = selected
                .iter()
                .map(|&s| dist(values, &pool[s].0))
                .fold(f64::INFINITY, f64::min);
            if best.map_or(true, |(bc, _)| closeness > bc) {
                best = Some((closeness, i));
            }
        }
        match best {
            Some((_, i)) => selected.push(i),
            None => break,
        }
    }

    let winner = selected
        .iter()
        .copied()
        .min_by(|&a, &b| {
            pool[a]
                .1
                .partial_cmp(&pool[b].1)
                .expect("finite distances")
                .then(a.cmp(&b))
        })
        .expect("non-empty selection");
    Ok(Some(pool[winner].0.clone()))
}
