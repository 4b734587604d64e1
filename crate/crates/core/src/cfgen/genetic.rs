//! Genetic counterfactual search (GeCo-style).
//!
//! Individuals are full feature assignments. The initial population
//! resamples features from training marginals with increasing aggression,
//! evolution uses tournament selection, feature-wise uniform crossover, and
//! marginal-resample mutation. Fitness is the flip indicator minus the
//! heterogeneous distance to the original, so any flipping individual
//! dominates every non-flipping one and closer flips win.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::data::{FeatureValue, Instance};
use crate::model::ModelError;

use super::{heterogeneous_distance, marginal_draw, Budget, GenerationContext};

const MUTATION_RATE: f64 = 0.1;
const TOURNAMENT: usize = 3;
const ELITES: usize = 2;

struct Evaluated {
    values: Vec<FeatureValue>,
    fitness: f64,
    flips: bool,
    distance: f64,
}

fn evaluate(
    ctx: &GenerationContext,
    orig: &Instance,
    orig_label: bool,
    pool: Vec<Vec<FeatureValue>>,
    budget: &mut Budget,
) -> Result<Option<Vec<Evaluated>>, ModelError> {
    if !budget.try_spend(pool.len()) {
        return Ok(None);
    }
    let batch: Vec<Instance> = pool
        .iter()
        .map(|values| Instance {
            id: String::new(),
            values: values.clone(),
        })
        .collect();
    let scores = ctx.model.predict(&batch)?;
    let out = pool
        .into_iter()
        .zip(scores)
        .map(|(values, s)| {
            let flips = ctx.model.label(s) != orig_label;
            let distance = heterogeneous_distance(
                &Instance {
                    id: String::new(),
                    values: values.clone(),
                },
                orig,
                ctx.encoder,
            );
            Evaluated {
                values,
                fitness: if flips { 1.0 } else { 0.0 } - distance,
                flips,
                distance,
            }
        })
        .collect();
    Ok(Some(out))
}

fn tournament_pick<'a>(
    pop: &'a [Evaluated],
    rng: &mut ChaCha20Rng,
) -> &'a Evaluated {
    let mut best: Option<&Evaluated> = None;
    for _ in 0..TOURNAMENT {
        let c = &pop[rng.gen_range(0..pop.len())];
        if best.map_or(true, |b| c.fitness > b.fitness) {
            best = Some(c);
        }
    }
    best.expect("non-empty population")
}

pub(super) fn geco(
    ctx: &GenerationContext,
    orig: &Instance,
    orig_label: bool,
    seed: u64,
    budget: &mut Budget,
) -> Result<Option<Vec<FeatureValue>>, ModelError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let nf = orig.values.len();
    let pop_size = ctx.cfg.population.max(2);

    let mut initial = Vec::with_capacity(pop_size);
    for k in 0..pop_size {
        let aggression = 0.2 + 0.6 * k as f64 / (pop_size - 1).max(1) as f64;
        let mut values = orig.values.clone();
        for f in 0..nf {
            if rng.gen_bool(aggression) {
                values[f] = marginal_draw(ctx.train, f, &mut rng);
            }
        }
        initial.push(values);
    }

    let Some(mut pop) = evaluate(ctx, orig, orig_label, initial, budget)? else {
        return Ok(None);
    };
    let mut best_flip: Option<(f64, Vec<FeatureValue>)> = None;
    let note_best = |pop: &[Evaluated], best: &mut Option<(f64, Vec<FeatureValue>)>| {
        for e in pop {
            if e.flips && best.as_ref().map_or(true, |(d, _)| e.distance < *d) {
                *best = Some((e.distance, e.values.clone()));
            }
        }
    };
    note_best(&pop, &mut best_flip);

    for _gen in 0..ctx.cfg.generations {
        if budget.remaining() < pop_size {
            break;
        }
        // elitism keeps the top individuals, ties to the earlier index
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| {
            pop[b]
                .fitness
                .partial_cmp(&pop[a].fitness)
                .expect("finite fitness")
                .then(a.cmp(&b))
        });
        let mut next: Vec<Vec<FeatureValue>> = order
            .iter()
            .take(ELITES.min(pop.len()))
            .map(|&i| pop[i].values.clone())
            .collect();
        while next.len() < pop_size {
            let a = tournament_pick(&pop, &mut rng);
            let b = tournament_pick(&pop, &mut rng);
            let mut child = Vec::with_capacity(nf);
            for f in 0..nf {
                child.push(if rng.gen_bool(0.5) {
                    a.values[f]
                } else {
                    b.values[f]
                });
            }
            for f in 0..nf {
                if rng.gen_bool(MUTATION_RATE) {
                    child[f] = marginal_draw(ctx.train, f, &mut rng);
                }
            }
            next.push(child);
        }
        let Some(evaluated) = evaluate(ctx, orig, orig_label, next, budget)? else {
            break;
        };
        pop = evaluated;
        note_best(&pop, &mut best_flip);
    }

    Ok(best_flip.map(|(_, values)| values))
}
