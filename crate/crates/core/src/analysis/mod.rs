//! Aggregation of per-instance metrics into dataset tables, boxplot
//! statistics, and method-similarity embeddings.

mod mds;

use serde::Serialize;
use thiserror::Error;

use crate::explanations::{ExplanationGroup, ExplanationSet, MethodInfo};
use crate::metrics::{
    effective, relative_feature_exclusion, relative_feature_span, FeatureSpace, MetricsError,
};

pub use mds::{classical_mds, mds_input_from_matrix, MdsEmbedding};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("empty value list")]
    EmptyValues,
    #[error("subset '{0}' has no methods")]
    EmptySubset(String),
    #[error("matrix is not square")]
    NotSquare,
    #[error("matrix is not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("matrix has negative entry at ({0}, {1})")]
    NegativeEntry(usize, usize),
    #[error("matrix diagonal is not zero at {0}")]
    NonZeroDiagonal(usize),
    #[error("matrix cell ({0}, {1}) is undefined; cannot embed")]
    MissingCell(usize, usize),
    #[error("unsupported MDS input kind {0:?}")]
    UnsupportedMdsInput(crate::metrics::MatrixKind),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Linear-interpolation quantile (the R-7 convention) on a sorted slice.
///
/// This is the convention that reproduces the paper-style quartiles from
/// printed table columns; it is fixed here and reused everywhere quartiles
/// are needed.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    }
}

/// Five-number summary plus the mean; whiskers are the min and max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxplotStats {
    pub average: f64,
    pub median: f64,
    pub lower_quartile: f64,
    pub upper_quartile: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
}

pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptyValues);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    Ok(BoxplotStats {
        average: sorted.iter().sum::<f64>() / sorted.len() as f64,
        median: quantile(&sorted, 0.5),
        lower_quartile: quantile(&sorted, 0.25),
        upper_quartile: quantile(&sorted, 0.75),
        lower_whisker: sorted[0],
        upper_whisker: sorted[sorted.len() - 1],
    })
}

/// Mean and sample standard deviation (n-1 denominator; 0 for singletons),
/// the convention behind the tables' Average / Standard Deviation rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub mean: f64,
    pub std: f64,
}

pub fn column_summary(values: &[f64]) -> Result<ColumnSummary, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptyValues);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(ColumnSummary { mean, std })
}

/// A named method subset for the columns of the exclusion/span tables.
#[derive(Debug, Clone, Serialize)]
pub struct MethodSubset {
    pub name: String,
    pub methods: Vec<String>,
}

/// The standard table columns: Prox, Plaus, All CF, All. Empty subsets are
/// omitted (for example with no Prox methods configured).
pub fn standard_subsets(methods: &[MethodInfo]) -> Vec<MethodSubset> {
    let of_group = |g: ExplanationGroup| -> Vec<String> {
        methods
            .iter()
            .filter(|m| m.group == g)
            .map(|m| m.name.clone())
            .collect()
    };
    let prox = of_group(ExplanationGroup::Prox);
    let plaus = of_group(ExplanationGroup::Plaus);
    let mut all_cf = plaus.clone();
    all_cf.extend(prox.iter().cloned());
    let all: Vec<String> = methods.iter().map(|m| m.name.clone()).collect();

    [
        ("Prox", prox),
        ("Plaus", plaus),
        ("All CF", all_cf),
        ("All", all),
    ]
    .into_iter()
    .filter(|(_, ms)| !ms.is_empty())
    .map(|(name, methods)| MethodSubset {
        name: name.to_string(),
        methods,
    })
    .collect()
}

/// Per-subset exclusion/span averaged over explananda. Instances where the
/// subset has no usable explanation are skipped; a subset with no usable
/// instance at all reports `None`.
#[derive(Debug, Clone, Serialize)]
pub struct SubsetAverages {
    pub subset: String,
    pub exclusion: Option<f64>,
    pub span: Option<f64>,
    /// Explananda that contributed to the averages.
    pub instances: usize,
    /// Per-instance span values, for boxplot statistics downstream.
    #[serde(skip)]
    pub span_values: Vec<f64>,
}

pub fn aggregate(
    set: &ExplanationSet,
    space: &FeatureSpace,
    subsets: &[MethodSubset],
    missing_as_empty: bool,
) -> Result<Vec<SubsetAverages>, AnalysisError> {
    let instances = set.instances();
    let mut out = Vec::with_capacity(subsets.len());
    for subset in subsets {
        if subset.methods.is_empty() {
            return Err(AnalysisError::EmptySubset(subset.name.clone()));
        }
        let mut excl = Vec::new();
        let mut span = Vec::new();
        for origin in &instances {
            let records = set.for_instance(origin);
            let chosen: Vec<&crate::explanations::Explanation> = records
                .into_iter()
                .filter(|r| subset.methods.iter().any(|m| *m == r.method))
                .collect();
            let usable = effective(&chosen, missing_as_empty);
            if usable.is_empty() {
                continue;
            }
            let refs: Vec<&crate::explanations::Explanation> =
                usable.iter().map(|c| c.as_ref()).collect();
            excl.push(relative_feature_exclusion(&refs, space)?);
            span.push(relative_feature_span(&refs, space)?);
        }
        out.push(SubsetAverages {
            subset: subset.name.clone(),
            exclusion: (!excl.is_empty()).then(|| excl.iter().sum::<f64>() / excl.len() as f64),
            span: (!span.is_empty()).then(|| span.iter().sum::<f64>() / span.len() as f64),
            instances: span.len(),
            span_values: span,
        })
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explanations::Explanation;

    #[test]
    fn boxplot_single_value_collapses() {
        let s = boxplot_stats(&[4.2]).unwrap();
        assert_eq!(s.average, 4.2);
        assert_eq!(s.median, 4.2);
        assert_eq!(s.lower_quartile, 4.2);
        assert_eq!(s.upper_quartile, 4.2);
        assert_eq!(s.lower_whisker, 4.2);
        assert_eq!(s.upper_whisker, 4.2);
    }

    #[test]
    fn boxplot_even_count_median_interpolates() {
        // oracle for even n: mean of the two middle order statistics
        let s = boxplot_stats(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.5);
        assert_eq!(s.lower_whisker, 1.0);
        assert_eq!(s.upper_whisker, 4.0);
    }

    #[test]
    fn boxplot_permutation_invariant_and_monotone_on_max() {
        let base = [5.0, 9.0, 1.0, 7.0, 3.0];
        let mut shuffled = base;
        shuffled.reverse();
        assert_eq!(
            boxplot_stats(&base).unwrap(),
            boxplot_stats(&shuffled).unwrap()
        );
        let mut extended = base.to_vec();
        extended.push(50.0);
        let a = boxplot_stats(&base).unwrap();
        let b = boxplot_stats(&extended).unwrap();
        assert!(b.upper_whisker > a.upper_whisker);
        assert!(b.average > a.average);
        assert_eq!(b.lower_whisker, a.lower_whisker);
    }

    #[test]
    fn column_summary_uses_sample_std() {
        let s = column_summary(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 1.0).abs() < 1e-12);
        let single = column_summary(&[7.0]).unwrap();
        assert_eq!(single.std, 0.0);
        // identical values across datasets give zero deviation
        let twin = column_summary(&[4.0, 4.0]).unwrap();
        assert_eq!(twin.std, 0.0);
    }

    #[test]
    fn aggregate_single_instance_equals_pointwise_metrics() {
        let space = FeatureSpace::from_names(vec!["a".into(), "b".into(), "c".into()]);
        let mut set = ExplanationSet::new("d", "t");
        set.push(
            MethodInfo {
                name: "M".into(),
                group: ExplanationGroup::Prox,
            },
            Explanation::new("M", "0", [0usize, 2].into_iter().collect(), true),
        )
        .unwrap();
        let subsets = vec![MethodSubset {
            name: "only".into(),
            methods: vec!["M".into()],
        }];
        let rows = aggregate(&set, &space, &subsets, false).unwrap();
        assert_eq!(rows[0].instances, 1);
        assert_eq!(rows[0].span, Some(2.0 / 3.0));
        assert_eq!(rows[0].exclusion, Some(1.0 / 3.0));
    }

    #[test]
    fn standard_subsets_drop_empty_groups() {
        let methods = vec![
            MethodInfo {
                name: "P1".into(),
                group: ExplanationGroup::Plaus,
            },
            MethodInfo {
                name: "P2".into(),
                group: ExplanationGroup::Plaus,
            },
            MethodInfo {
                name: "S".into(),
                group: ExplanationGroup::Other,
            },
        ];
        let subsets = standard_subsets(&methods);
        let names: Vec<&str> = subsets.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, vec!["Plaus", "All CF", "All"]);
        assert_eq!(subsets.last().unwrap().methods.len(), 3);
    }
}
