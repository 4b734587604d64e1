//! Disagreement metrics over explanation sets.
//!
//! All quantities are pure set arithmetic on the feature sets of one
//! instance's explanations; dataset-level numbers average these over
//! explananda. Not-found explanations are dropped from method collections
//! before evaluation (treating them as empty sets would make exclusion
//! trivially full and leave the asymmetric disagreement undefined); the
//! `missing_as_empty` switch exists for sensitivity analysis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Schema;
use crate::explanations::{Explanation, ExplanationGroup, ExplanationSet};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no found explanations in the collection")]
    EmptyCollection,
    #[error("feature index {index} out of range for {size} features")]
    FeatureOutOfRange { index: usize, size: usize },
    #[error("group {0:?} has fewer than 2 members; intra-group mean undefined")]
    GroupTooSmall(ExplanationGroup),
    #[error("feature space must have at least 1 feature")]
    EmptyFeatureSpace,
}

/// The feature universe `F_D` of one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub names: Vec<String>,
}

impl FeatureSpace {
    pub fn from_names(names: Vec<String>) -> FeatureSpace {
        assert!(!names.is_empty(), "feature space must be non-empty");
        FeatureSpace { names }
    }

    pub fn from_schema(schema: &Schema) -> FeatureSpace {
        FeatureSpace {
            names: schema.features.iter().map(|f| f.name.clone()).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Apply the missing-explanation policy: drop not-found records, or keep
/// them as found-with-empty-set when `missing_as_empty` is on.
pub fn effective<'a>(
    es: &[&'a Explanation],
    missing_as_empty: bool,
) -> Vec<std::borrow::Cow<'a, Explanation>> {
    es.iter()
        .filter_map(|e| {
            if e.found {
                Some(std::borrow::Cow::Borrowed(*e))
            } else if missing_as_empty {
                let mut as_empty = (*e).clone();
                as_empty.found = true;
                Some(std::borrow::Cow::Owned(as_empty))
            } else {
                None
            }
        })
        .collect()
}

/// Fraction of features absent from at least one explanation:
/// `|U_i (F_D \ E_i)| / |F_D|`. Not-found explanations are dropped first.
pub fn relative_feature_exclusion(
    es: &[&Explanation],
    space: &FeatureSpace,
) -> Result<f64, MetricsError> {
    let present = effective(es, false);
    if present.is_empty() {
        return Err(MetricsError::EmptyCollection);
    }
    let fd = space.size();
    let mut excluded = vec![false; fd];
    for e in &present {
        for f in 0..fd {
            if !e.features.contains(&f) {
                excluded[f] = true;
            }
        }
    }
    Ok(excluded.iter().filter(|x| **x).count() as f64 / fd as f64)
}

/// Fraction of features present in at least one explanation:
/// `|E_a U ... U E_n| / |F_D|`.
pub fn relative_feature_span(
    es: &[&Explanation],
    space: &FeatureSpace,
) -> Result<f64, MetricsError> {
    let present = effective(es, false);
    if present.is_empty() {
        return Err(MetricsError::EmptyCollection);
    }
    let mut union = std::collections::BTreeSet::new();
    for e in &present {
        union.extend(e.features.iter().copied());
    }
    Ok(union.len() as f64 / space.size() as f64)
}

/// Scaled L0: `|E_a ∩ E_b| / |F_D|`, implemented exactly as printed even
/// though it behaves like an overlap rather than a distance.
pub fn scaled_l0(a: &Explanation, b: &Explanation, space: &FeatureSpace) -> f64 {
    let inter = a.features.intersection(&b.features).count();
    inter as f64 / space.size() as f64
}

/// Asymmetric feature disagreement: `|E_a \ E_b| / |E_a|`. Undefined when
/// `E_a` is empty; callers report the cell as missing.
pub fn feature_disagreement(a: &Explanation, b: &Explanation) -> Option<f64> {
    if a.features.is_empty() {
        return None;
    }
    let unique = a.features.difference(&b.features).count();
    Some(unique as f64 / a.features.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JaccardPair {
    pub similarity: f64,
    pub dissimilarity: f64,
}

/// Jaccard similarity `|E_a ∩ E_b| / |E_a U E_b|` and its complement.
/// Undefined when both sets are empty.
pub fn jaccard(a: &Explanation, b: &Explanation) -> Option<JaccardPair> {
    let union = a.features.union(&b.features).count();
    if union == 0 {
        return None;
    }
    let inter = a.features.intersection(&b.features).count();
    let similarity = inter as f64 / union as f64;
    Some(JaccardPair {
        similarity,
        dissimilarity: 1.0 - similarity,
    })
}

/// Explanation size relative to the feature count: `|E_a| / |F_D|`.
pub fn sparsity(a: &Explanation, space: &FeatureSpace) -> f64 {
    a.features.len() as f64 / space.size() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    Exclude,
    Include,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeOutcome {
    pub possible: bool,
    /// Methods whose explanation omits (exclude) or contains (include) the
    /// probed feature, in collection order.
    pub witnesses: Vec<String>,
}

/// Adversarial probe: can a user pick a method that hides or plants the
/// given feature? Not-found explanations are dropped first.
pub fn probe(
    es: &[&Explanation],
    feature: usize,
    mode: ProbeMode,
    space: &FeatureSpace,
) -> Result<ProbeOutcome, MetricsError> {
    if feature >= space.size() {
        return Err(MetricsError::FeatureOutOfRange {
            index: feature,
            size: space.size(),
        });
    }
    let present = effective(es, false);
    if present.is_empty() {
        return Err(MetricsError::EmptyCollection);
    }
    let witnesses: Vec<String> = present
        .iter()
        .filter(|e| match mode {
            ProbeMode::Exclude => !e.features.contains(&feature),
            ProbeMode::Include => e.features.contains(&feature),
        })
        .map(|e| e.method.clone())
        .collect();
    Ok(ProbeOutcome {
        possible: !witnesses.is_empty(),
        witnesses,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    FeatureDisagreement,
    ScaledL0,
    JaccardSim,
    JaccardDissim,
}

/// Pairwise method-by-method matrix averaged over explananda. Cells are
/// `None` when the pair metric was never defined (missing explanations or
/// empty sets). Row = first argument of the asymmetric Eq. 4.
#[derive(Debug, Clone, Serialize)]
pub struct DisagreementMatrix {
    pub kind: MatrixKind,
    pub methods: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl DisagreementMatrix {
    pub fn cell(&self, a: &str, b: &str) -> Option<f64> {
        let ia = self.methods.iter().position(|m| m == a)?;
        let ib = self.methods.iter().position(|m| m == b)?;
        self.values[ia][ib]
    }
}

/// Compute one pairwise matrix from an explanation set.
pub fn pairwise_matrix(
    set: &ExplanationSet,
    kind: MatrixKind,
    space: &FeatureSpace,
    missing_as_empty: bool,
) -> DisagreementMatrix {
    let methods: Vec<String> = set.methods.iter().map(|m| m.name.clone()).collect();
    let instances = set.instances();
    let n = methods.len();
    let mut sums = vec![vec![0.0f64; n]; n];
    let mut counts = vec![vec![0usize; n]; n];

    for origin in &instances {
        let records = set.for_instance(origin);
        let usable: Vec<std::borrow::Cow<Explanation>> = effective(&records, missing_as_empty);
        for a in &usable {
            let Some(ia) = methods.iter().position(|m| *m == a.method) else {
                continue;
            };
            for b in &usable {
                let ib = methods
                    .iter()
                    .position(|m| *m == b.method)
                    .expect("method registered");
                let value = match kind {
                    MatrixKind::FeatureDisagreement => feature_disagreement(a, b),
                    MatrixKind::ScaledL0 => Some(scaled_l0(a, b, space)),
                    MatrixKind::JaccardSim => jaccard(a, b).map(|j| j.similarity),
                    MatrixKind::JaccardDissim => jaccard(a, b).map(|j| j.dissimilarity),
                };
                if let Some(v) = value {
                    sums[ia][ib] += v;
                    counts[ia][ib] += 1;
                }
            }
        }
    }

    let values = sums
        .into_iter()
        .zip(counts)
        .map(|(row, crow)| {
            row.into_iter()
                .zip(crow)
                .map(|(s, c)| if c > 0 { Some(s / c as f64) } else { None })
                .collect()
        })
        .collect();
    DisagreementMatrix {
        kind,
        methods,
        values,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupDisagreement {
    pub method: String,
    pub group: ExplanationGroup,
    pub intra: Option<f64>,
    pub inter: Option<f64>,
}

/// Intra/inter group means of the asymmetric feature disagreement.
///
/// Only grouped methods (Plaus/Prox) participate; the inter mean of a
/// method covers the opposite group, matching the paper's table. Cells are
/// flat means over all defined (other method, instance) pairs; undefined
/// cells are skipped. Errors when a represented group has fewer than two
/// members.
pub fn group_disagreement(
    set: &ExplanationSet,
    missing_as_empty: bool,
) -> Result<Vec<GroupDisagreement>, MetricsError> {
    let grouped: Vec<&crate::explanations::MethodInfo> = set
        .methods
        .iter()
        .filter(|m| m.group != ExplanationGroup::Other)
        .collect();
    for group in [ExplanationGroup::Plaus, ExplanationGroup::Prox] {
        let members = grouped.iter().filter(|m| m.group == group).count();
        if members > 0 && members < 2 {
            return Err(MetricsError::GroupTooSmall(group));
        }
    }
    if grouped.iter().any(|m| m.group == ExplanationGroup::Plaus)
        != grouped.iter().any(|m| m.group == ExplanationGroup::Prox)
    {
        // one side entirely absent: inter means are undefined
        let missing = if grouped.iter().any(|m| m.group == ExplanationGroup::Plaus) {
            ExplanationGroup::Prox
        } else {
            ExplanationGroup::Plaus
        };
        return Err(MetricsError::GroupTooSmall(missing));
    }

    let instances = set.instances();
    let mut out = Vec::new();
    for m in &grouped {
        let mut intra = (0.0, 0usize);
        let mut inter = (0.0, 0usize);
        for origin in &instances {
            let records = set.for_instance(origin);
            let usable = effective(&records, missing_as_empty);
            let Some(a) = usable.iter().find(|e| e.method == m.name) else {
                continue;
            };
            for other in &grouped {
                if other.name == m.name {
                    continue;
                }
                let Some(b) = usable.iter().find(|e| e.method == other.name) else {
                    continue;
                };
                if let Some(v) = feature_disagreement(a, b) {
                    if other.group == m.group {
                        intra.0 += v;
                        intra.1 += 1;
                    } else {
                        inter.0 += v;
                        inter.1 += 1;
                    }
                }
            }
        }
        out.push(GroupDisagreement {
            method: m.name.clone(),
            group: m.group,
            intra: (intra.1 > 0).then(|| intra.0 / intra.1 as f64),
            inter: (inter.1 > 0).then(|| inter.0 / inter.1 as f64),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explanations::MethodInfo;
    use std::collections::BTreeSet;

    fn expl(method: &str, features: &[usize]) -> Explanation {
        Explanation::new(method, "0", features.iter().copied().collect(), true)
    }

    fn space(n: usize) -> FeatureSpace {
        FeatureSpace::from_names((0..n).map(|i| format!("f{i}")).collect())
    }

    #[test]
    fn exclusion_and_span_basics() {
        let f = space(4);
        let full = expl("A", &[0, 1, 2, 3]);
        // a single full explanation leaves nothing excludable
        assert_eq!(
            relative_feature_exclusion(&[&full], &f).unwrap(),
            0.0
        );
        // span of one method equals its sparsity
        let half = expl("B", &[1, 3]);
        assert_eq!(
            relative_feature_span(&[&half], &f).unwrap(),
            sparsity(&half, &f)
        );
        assert!(matches!(
            relative_feature_exclusion(&[], &f),
            Err(MetricsError::EmptyCollection)
        ));
        // not-found records are dropped, not treated as empty sets
        let missing = Explanation::missing("C", "0");
        assert_eq!(
            relative_feature_exclusion(&[&full, &missing], &f).unwrap(),
            0.0
        );
    }

    #[test]
    fn pairwise_metric_identities() {
        let f = space(8);
        let a = expl("A", &[0, 1, 2, 5]);
        let b = expl("B", &[1, 2, 6]);
        // disagreement(a, b) = 1 - |inter| / |E_a|
        let inter = a.features.intersection(&b.features).count() as f64;
        assert_eq!(
            feature_disagreement(&a, &b).unwrap(),
            1.0 - inter / a.features.len() as f64
        );
        assert_eq!(feature_disagreement(&a, &a).unwrap(), 0.0);
        // jaccard_sim * |union| = scaled_l0 * |F_D|
        let j = jaccard(&a, &b).unwrap();
        let union = a.features.union(&b.features).count() as f64;
        assert!((j.similarity * union - scaled_l0(&a, &b, &f) * 8.0).abs() < 1e-12);
        // disjoint / identical extremes
        let d = expl("D", &[6, 7]);
        let c = expl("C", &[0, 1, 2, 5]);
        assert_eq!(scaled_l0(&a, &d, &f), 0.0);
        assert_eq!(jaccard(&a, &c).unwrap().similarity, 1.0);
        assert_eq!(jaccard(&a, &d).unwrap().dissimilarity, 1.0);
        // undefined cells
        let empty = expl("E", &[]);
        assert!(feature_disagreement(&empty, &a).is_none());
        assert!(jaccard(&empty, &expl("F", &[])).is_none());
    }

    #[test]
    fn probe_modes_and_bounds() {
        let f = space(3);
        let a = expl("A", &[0]);
        let b = expl("B", &[0, 1]);
        let ex = probe(&[&a, &b], 1, ProbeMode::Exclude, &f).unwrap();
        assert!(ex.possible);
        assert_eq!(ex.witnesses, vec!["A"]);
        let inc = probe(&[&a, &b], 2, ProbeMode::Include, &f).unwrap();
        assert!(!inc.possible);
        assert!(inc.witnesses.is_empty());
        assert!(matches!(
            probe(&[&a], 9, ProbeMode::Include, &f),
            Err(MetricsError::FeatureOutOfRange { .. })
        ));
    }

    #[test]
    fn monotone_in_added_methods() {
        let f = space(6);
        let a = expl("A", &[0, 1]);
        let b = expl("B", &[2]);
        let c = expl("C", &[3, 4]);
        let two_excl = relative_feature_exclusion(&[&a, &b], &f).unwrap();
        let three_excl = relative_feature_exclusion(&[&a, &b, &c], &f).unwrap();
        assert!(three_excl >= two_excl);
        let two_span = relative_feature_span(&[&a, &b], &f).unwrap();
        let three_span = relative_feature_span(&[&a, &b, &c], &f).unwrap();
        assert!(three_span >= two_span);
    }

    fn toy_set() -> (ExplanationSet, FeatureSpace) {
        let f = space(4);
        let mut set = ExplanationSet::new("toy", "t");
        let plaus_a = MethodInfo {
            name: "PA".into(),
            group: ExplanationGroup::Plaus,
        };
        let plaus_b = MethodInfo {
            name: "PB".into(),
            group: ExplanationGroup::Plaus,
        };
        let prox_a = MethodInfo {
            name: "XA".into(),
            group: ExplanationGroup::Prox,
        };
        let prox_b = MethodInfo {
            name: "XB".into(),
            group: ExplanationGroup::Prox,
        };
        // twins in Plaus; Prox disjoint from them
        set.push(plaus_a, expl("PA", &[0, 1])).unwrap();
        set.push(plaus_b, expl("PB", &[0, 1])).unwrap();
        set.push(prox_a, expl("XA", &[2, 3])).unwrap();
        set.push(prox_b, expl("XB", &[2])).unwrap();
        (set, f)
    }

    #[test]
    fn group_disagreement_twin_and_disjoint_pattern() {
        let (set, _f) = toy_set();
        let rows = group_disagreement(&set, false).unwrap();
        let pa = rows.iter().find(|r| r.method == "PA").unwrap();
        assert_eq!(pa.intra, Some(0.0));
        assert_eq!(pa.inter, Some(1.0));
        // hand-enumerated: XA vs XB = |{3}|/2 = 0.5 intra; vs PA, PB = 1.0
        let xa = rows.iter().find(|r| r.method == "XA").unwrap();
        assert_eq!(xa.intra, Some(0.5));
        assert_eq!(xa.inter, Some(1.0));
    }

    #[test]
    fn group_disagreement_needs_two_members() {
        let mut set = ExplanationSet::new("t", "t");
        set.push(
            MethodInfo {
                name: "P".into(),
                group: ExplanationGroup::Plaus,
            },
            expl("P", &[0]),
        )
        .unwrap();
        set.push(
            MethodInfo {
                name: "X1".into(),
                group: ExplanationGroup::Prox,
            },
            expl("X1", &[1]),
        )
        .unwrap();
        set.push(
            MethodInfo {
                name: "X2".into(),
                group: ExplanationGroup::Prox,
            },
            expl("X2", &[1]),
        )
        .unwrap();
        assert!(matches!(
            group_disagreement(&set, false),
            Err(MetricsError::GroupTooSmall(ExplanationGroup::Plaus))
        ));
    }

    #[test]
    fn matrix_diagonals_follow_definitions() {
        let (set, f) = toy_set();
        let fd = pairwise_matrix(&set, MatrixKind::FeatureDisagreement, &f, false);
        let l0 = pairwise_matrix(&set, MatrixKind::ScaledL0, &f, false);
        let sim = pairwise_matrix(&set, MatrixKind::JaccardSim, &f, false);
        let dis = pairwise_matrix(&set, MatrixKind::JaccardDissim, &f, false);
        for (i, m) in fd.methods.iter().enumerate() {
            assert_eq!(fd.values[i][i], Some(0.0), "{m}");
            assert_eq!(sim.values[i][i], Some(1.0), "{m}");
            assert_eq!(dis.values[i][i], Some(0.0), "{m}");
            // L0 diagonal is the method's sparsity by definition
            let rec = set.record(m, "0").unwrap();
            assert_eq!(l0.values[i][i], Some(sparsity(rec, &f)), "{m}");
        }
        // symmetry of the symmetric kinds
        for i in 0..l0.methods.len() {
            for j in 0..l0.methods.len() {
                assert_eq!(l0.values[i][j], l0.values[j][i]);
                assert_eq!(sim.values[i][j], sim.values[j][i]);
            }
        }
    }

    #[test]
    fn missing_as_empty_changes_the_policy() {
        let f = space(2);
        let found = expl("A", &[0]);
        let missing = Explanation::missing("B", "0");
        // dropped by default: exclusion over {A} = |{1}|/2
        assert_eq!(
            relative_feature_exclusion(&[&found, &missing], &f).unwrap(),
            0.5
        );
        // as empty set: exclusion over {A, B-empty} = 1.0
        let eff = effective(&[&found, &missing], true);
        let refs: Vec<&Explanation> = eff.iter().map(|c| c.as_ref()).collect();
        assert_eq!(relative_feature_exclusion(&refs, &f).unwrap(), 1.0);
    }

    #[test]
    fn effective_keeps_sets_intact() {
        let e = expl("A", &[1]);
        let missing = Explanation::missing("B", "0");
        let eff = effective(&[&e, &missing], false);
        assert_eq!(eff.len(), 1);
        let eff2 = effective(&[&e, &missing], true);
        assert_eq!(eff2.len(), 2);
        assert!(eff2[1].found);
        assert!(eff2[1].features.is_empty());
        let mut s = BTreeSet::new();
        s.insert(1);
        assert_eq!(eff[0].features, s);
    }
}
