//! Counterfactual generation.
//!
//! Nine desk-scale algorithms spanning the Plaus/Prox taxonomy share one
//! contract: given a model, a training set, and an original instance,
//! return a full instance whose predicted label differs from the
//! original's, or report that none was found within the evaluation budget.
//! Every generator is a pure function of `(model, train, orig, config,
//! seed)`, so audits can run cells in parallel without affecting results.

mod diverse;
mod genetic;
mod greedy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Encoder, FeatureKind, FeatureValue, Instance};
use crate::model::{ModelError, PredictionModel};

#[derive(Debug, Error)]
pub enum CfError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown method name '{0}'")]
    UnknownMethod(String),
}

/// Built-in counterfactual algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Cbr,
    Wit,
    NiceNone,
    NicePlaus,
    NiceProx,
    NiceSpars,
    Sedc,
    Geco,
    Dice,
}

/// Taxonomy group: algorithms that optimize for plausibility versus those
/// that only optimize proximity/sparsity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodGroup {
    Plaus,
    Prox,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Cbr,
        Method::Wit,
        Method::NiceNone,
        Method::NicePlaus,
        Method::NiceProx,
        Method::NiceSpars,
        Method::Sedc,
        Method::Geco,
        Method::Dice,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Cbr => "CBR",
            Method::Wit => "WIT",
            Method::NiceNone => "NICE(none)",
            Method::NicePlaus => "NICE(plaus)",
            Method::NiceProx => "NICE(prox)",
            Method::NiceSpars => "NICE(spars)",
            Method::Sedc => "SEDC",
            Method::Geco => "GeCo",
            Method::Dice => "DiCE",
        }
    }

    pub fn group(&self) -> MethodGroup {
        match self {
            Method::Cbr | Method::Wit | Method::NiceNone | Method::NicePlaus | Method::Geco => {
                MethodGroup::Plaus
            }
            Method::Dice | Method::NiceProx | Method::NiceSpars | Method::Sedc => MethodGroup::Prox,
        }
    }

    /// Parse either the display form ("NICE(prox)") or the identifier form
    /// ("NICE_prox", case-insensitive).
    pub fn parse(s: &str) -> Option<Method> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Method::ALL.iter().copied().find(|m| {
            let canon: String = m
                .name()
                .chars()
                .filter(|c| c.is_ascii_alphanumeric())
                .collect::<String>()
                .to_ascii_lowercase();
            canon == norm
        })
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Budgets and knobs shared by all generators.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Model evaluations allowed per (method, instance) cell.
    pub max_evaluations: usize,
    /// Genetic search population size.
    pub population: usize,
    /// Genetic search generations.
    pub generations: usize,
    /// Diverse-search candidate count `k`.
    pub diversity_k: usize,
    /// Neighbors used by the plausibility reward.
    pub plaus_neighbors: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_evaluations: 20_000,
            population: 40,
            generations: 30,
            diversity_k: 4,
            plaus_neighbors: 5,
        }
    }
}

/// Generation outcome. `instance` is absent when the method found no
/// counterfactual within budget; that is a reportable result, not an error.
#[derive(Debug, Clone)]
pub struct Counterfactual {
    pub method: Method,
    pub origin_id: String,
    pub instance: Option<Instance>,
    /// Model evaluations spent on this cell.
    pub evaluations: usize,
}

impl Counterfactual {
    pub fn found(&self) -> bool {
        self.instance.is_some()
    }
}

/// Read-only inputs shared by all generator invocations for one
/// (dataset, model) pair.
pub struct GenerationContext<'a> {
    pub model: &'a PredictionModel,
    pub train: &'a Dataset,
    pub encoder: &'a Encoder,
    /// Predicted labels of the training instances under `model`.
    pub train_predicted: &'a [bool],
    pub cfg: &'a GeneratorConfig,
}

pub(crate) struct Budget {
    used: usize,
    cap: usize,
}

impl Budget {
    fn new(cap: usize) -> Budget {
        Budget { used: 0, cap }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.cap.saturating_sub(self.used)
    }

    pub(crate) fn try_spend(&mut self, n: usize) -> bool {
        if self.used + n > self.cap {
            return false;
        }
        self.used += n;
        true
    }

    pub(crate) fn used(&self) -> usize {
        self.used
    }
}

/// Per-feature contribution to the heterogeneous distance, before the mean
/// over features: `|delta| / range` for numeric (clamped to [0, 1]),
/// 0/1 mismatch for categorical.
pub(crate) fn feature_gap(
    encoder: &Encoder,
    feature: usize,
    a: &FeatureValue,
    b: &FeatureValue,
) -> f64 {
    match (a, b) {
        (FeatureValue::Num(x), FeatureValue::Num(y)) => {
            let (lo, hi) = encoder.numeric_range(feature);
            let range = hi - lo;
            if range > 0.0 {
                ((x - y).abs() / range).min(1.0)
            } else if x == y {
                0.0
            } else {
                1.0
            }
        }
        (FeatureValue::Cat(x), FeatureValue::Cat(y)) => {
            if x == y {
                0.0
            } else {
                1.0
            }
        }
        _ => 1.0,
    }
}

/// Gower-style mean distance over features: numeric gaps are scaled by the
/// train range of each feature (raw values), categorical gaps are 0/1
/// mismatches. Always in `[0, 1]`.
pub fn heterogeneous_distance(a: &Instance, b: &Instance, encoder: &Encoder) -> f64 {
    let nf = a.values.len();
    debug_assert_eq!(nf, b.values.len());
    let mut total = 0.0;
    for fi in 0..nf {
        total += feature_gap(encoder, fi, &a.values[fi], &b.values[fi]);
    }
    total / nf as f64
}

/// Index of the training instance closest to `orig` among those the model
/// predicts to the opposite label. Ties break to the lowest index.
pub fn nearest_unlike_neighbor(
    ctx: &GenerationContext,
    orig: &Instance,
    orig_label: bool,
) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, inst) in ctx.train.instances.iter().enumerate() {
        if ctx.train_predicted[i] == orig_label {
            continue;
        }
        let d = heterogeneous_distance(orig, inst, ctx.encoder);
        let better = match best {
            None => true,
            Some((bd, _)) => d < bd,
        };
        if better {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}

/// Probability of the counterfactual target class (the opposite of the
/// original's predicted label).
pub(crate) fn target_score(score: f64, orig_positive: bool) -> f64 {
    if orig_positive {
        1.0 - score
    } else {
        score
    }
}

pub(crate) fn cf_instance(method: Method, origin_id: &str, values: Vec<FeatureValue>) -> Instance {
    Instance {
        id: format!("cf:{}:{}", method.name(), origin_id),
        values,
    }
}

/// Exact change-set minimization by subset enumeration.
///
/// Enumerates subsets of the substitutions in ascending cardinality
/// (lexicographic within each cardinality) and returns the first flipping
/// subset, so no strict subset of the result flips. Sets larger than the
/// enumeration limit get a greedy backward pass instead. The input set,
/// which flips by construction, is always a valid fallback when the budget
/// runs out.
pub(crate) fn minimize_change_set(
    ctx: &GenerationContext,
    orig: &Instance,
    substitutions: &[(usize, FeatureValue)],
    orig_label: bool,
    budget: &mut Budget,
) -> Result<Vec<(usize, FeatureValue)>, ModelError> {
    let k = substitutions.len();
    if k <= 1 {
        return Ok(substitutions.to_vec());
    }
    let apply = |subset: &[usize]| -> Instance {
        let mut values = orig.values.clone();
        for &si in subset {
            let (fi, v) = substitutions[si];
            values[fi] = v;
        }
        Instance {
            id: String::new(),
            values,
        }
    };

    const ENUM_LIMIT: usize = 12;
    if k <= ENUM_LIMIT {
        for card in 1..k {
            let mut combo: Vec<usize> = (0..card).collect();
            'combos: loop {
                if !budget.try_spend(1) {
                    return Ok(substitutions.to_vec());
                }
                let candidate = apply(&combo);
                let s = ctx.model.predict_one(&candidate)?;
                if ctx.model.label(s) != orig_label {
                    return Ok(combo.iter().map(|&si| substitutions[si]).collect());
                }
                // advance to the next lexicographic combination
                let mut i = card;
                while i > 0 {
                    i -= 1;
                    if combo[i] < i + k - card {
                        combo[i] += 1;
                        for j in i + 1..card {
                            combo[j] = combo[j - 1] + 1;
                        }
                        continue 'combos;
                    }
                }
                break;
            }
        }
        Ok(substitutions.to_vec())
    } else {
        // greedy backward elimination, highest index first
        let mut keep: Vec<usize> = (0..k).collect();
        for drop in (0..k).rev() {
            if keep.len() == 1 {
                break;
            }
            let trial: Vec<usize> = keep.iter().copied().filter(|&s| s != drop).collect();
            if !budget.try_spend(1) {
                break;
            }
            let candidate = apply(&trial);
            let s = ctx.model.predict_one(&candidate)?;
            if ctx.model.label(s) != orig_label {
                keep = trial;
            }
        }
        Ok(keep.iter().map(|&si| substitutions[si]).collect())
    }
}

/// Run one generator on one instance.
///
/// Deterministic under `(seed, method, orig.id)`. A found counterfactual is
/// re-checked to flip the predicted label before it is returned.
pub fn generate(
    method: Method,
    ctx: &GenerationContext,
    orig: &Instance,
    seed: u64,
) -> Result<Counterfactual, ModelError> {
    let mut budget = Budget::new(ctx.cfg.max_evaluations);
    let orig_score = ctx.model.predict_one(orig)?;
    let orig_label = ctx.model.label(orig_score);
    budget.try_spend(1);

    let values = match method {
        Method::Wit => greedy::wit(ctx, orig, orig_label),
        Method::NiceNone | Method::NicePlaus | Method::NiceProx | Method::NiceSpars => {
            greedy::nice(method, ctx, orig, orig_label, orig_score, &mut budget)?
        }
        Method::Sedc => greedy::sedc(ctx, orig, orig_label, &mut budget)?,
        Method::Cbr => greedy::cbr(ctx, orig, orig_label, orig_score, &mut budget)?,
        Method::Geco => genetic::geco(ctx, orig, orig_label, seed, &mut budget)?,
        Method::Dice => diverse::dice(ctx, orig, orig_label, seed, &mut budget)?,
    };

    let instance = match values {
        None => None,
        Some(values) => {
            let inst = cf_instance(method, &orig.id, values);
            let s = ctx.model.predict_one(&inst)?;
            assert!(
                ctx.model.label(s) != orig_label,
                "validity violation: {} produced a non-flipping counterfactual for instance {}",
                method.name(),
                orig.id
            );
            Some(inst)
        }
    };

    Ok(Counterfactual {
        method,
        origin_id: orig.id.clone(),
        instance,
        evaluations: budget.used(),
    })
}

/// Draw one value for a feature from the training marginal.
pub(crate) fn marginal_draw(
    train: &Dataset,
    feature: usize,
    rng: &mut impl rand::Rng,
) -> FeatureValue {
    let row = rng.gen_range(0..train.len());
    train.instances[row].values[feature]
}

pub(crate) fn is_numeric(ctx: &GenerationContext, feature: usize) -> bool {
    ctx.train.schema.features[feature].kind == FeatureKind::Numeric
}

#[cfg(test)]
pub(crate) mod testctx {
    use super::*;
    use crate::model::{train_forest, ForestConfig};

    pub struct OwnedContext {
        pub train: Dataset,
        pub model: PredictionModel,
        pub encoder: Encoder,
        pub train_predicted: Vec<bool>,
        pub cfg: GeneratorConfig,
    }

    impl OwnedContext {
        pub fn new(train: Dataset, forest: &ForestConfig) -> OwnedContext {
            let model = train_forest(&train, forest).unwrap();
            let encoder = Encoder::fit(&train);
            let train_predicted = model.predict_labels(&train.instances).unwrap();
            OwnedContext {
                train,
                model,
                encoder,
                train_predicted,
                cfg: GeneratorConfig::default(),
            }
        }

        pub fn ctx(&self) -> GenerationContext<'_> {
            GenerationContext {
                model: &self.model,
                train: &self.train,
                encoder: &self.encoder,
                train_predicted: &self.train_predicted,
                cfg: &self.cfg,
            }
        }
    }
}
