//! Classical (Torgerson) multidimensional scaling.
//!
//! Squares the dissimilarities, double-centers (`B = -1/2 J D^2 J`), and
//! takes the top eigenpairs of the centered matrix with a cyclic Jacobi
//! solver. Coordinates are eigenvectors scaled by the square roots of the
//! nonnegative eigenvalues; truncated and negative eigenvalue mass is
//! reported as a relative stress residual. Matrices here are method-count
//! sized, so the dense Jacobi sweep is plenty.

use serde::Serialize;

use super::AnalysisError;
use crate::metrics::{DisagreementMatrix, MatrixKind};

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, Serialize)]
pub struct MdsEmbedding {
    pub methods: Vec<String>,
    /// One coordinate row per method, `dims` columns.
    pub coordinates: Vec<Vec<f64>>,
    /// Relative residual eigenvalue mass in [0, 1]; 0 for an exact embedding.
    pub stress: f64,
    /// All eigenvalues of the centered matrix, descending.
    pub eigenvalues: Vec<f64>,
}

impl MdsEmbedding {
    pub fn pairwise_distance(&self, a: usize, b: usize) -> f64 {
        self.coordinates[a]
            .iter()
            .zip(self.coordinates[b].iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// (eigenvalues, eigenvectors as columns), unsorted.
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off.sqrt() < JACOBI_TOL {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < JACOBI_TOL * 1e-3 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let eigenvalues = (0..n).map(|i| a[i][i]).collect();
    (eigenvalues, v)
}

/// Embed a symmetric zero-diagonal dissimilarity matrix into `dims`
/// coordinates with the Torgerson procedure.
pub fn classical_mds(
    methods: &[String],
    dissimilarity: &[Vec<f64>],
    dims: usize,
) -> Result<MdsEmbedding, AnalysisError> {
    let n = dissimilarity.len();
    if dissimilarity.iter().any(|row| row.len() != n) || methods.len() != n {
        return Err(AnalysisError::NotSquare);
    }
    for i in 0..n {
        if dissimilarity[i][i].abs() > 1e-12 {
            return Err(AnalysisError::NonZeroDiagonal(i));
        }
        for j in 0..n {
            if dissimilarity[i][j] < 0.0 {
                return Err(AnalysisError::NegativeEntry(i, j));
            }
            if (dissimilarity[i][j] - dissimilarity[j][i]).abs() > 1e-9 {
                return Err(AnalysisError::NotSymmetric(i, j));
            }
        }
    }

    // B = -1/2 * J * D^2 * J via row/column/grand means
    let sq: Vec<Vec<f64>> = dissimilarity
        .iter()
        .map(|row| row.iter().map(|d| d * d).collect())
        .collect();
    let row_mean: Vec<f64> = sq.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            b[i][j] = -0.5 * (sq[i][j] - row_mean[i] - row_mean[j] + grand);
        }
    }

    let (eigenvalues, vectors) = jacobi_eigen(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eigenvalues[y].partial_cmp(&eigenvalues[x]).expect("finite"));

    let mut coordinates = vec![vec![0.0; dims]; n];
    let mut captured = 0.0;
    for (d, &ei) in order.iter().take(dims).enumerate() {
        let lambda = eigenvalues[ei];
        if lambda <= 0.0 {
            continue;
        }
        captured += lambda;
        // stabilize the eigenvector sign on its largest-magnitude entry
        let mut pivot = 0usize;
        for k in 0..n {
            if vectors[k][ei].abs() > vectors[pivot][ei].abs() {
                pivot = k;
            }
        }
        let sign = if vectors[pivot][ei] < 0.0 { -1.0 } else { 1.0 };
        let scale = lambda.sqrt() * sign;
        for k in 0..n {
            coordinates[k][d] = vectors[k][ei] * scale;
        }
    }
    let total_mass: f64 = eigenvalues.iter().map(|l| l.abs()).sum();
    let stress = if total_mass > 0.0 {
        (1.0 - captured / total_mass).max(0.0)
    } else {
        0.0
    };

    let mut sorted_eigenvalues: Vec<f64> = order.iter().map(|&i| eigenvalues[i]).collect();
    // tidy tiny negative zeros for reporting
    for l in sorted_eigenvalues.iter_mut() {
        if l.abs() < 1e-15 {
            *l = 0.0;
        }
    }

    Ok(MdsEmbedding {
        methods: methods.to_vec(),
        coordinates,
        stress,
        eigenvalues: sorted_eigenvalues,
    })
}

/// Convert an averaged pairwise matrix into MDS input.
///
/// Jaccard dissimilarity passes through as-is. The raw scaled-L0 matrix (a
/// similarity-flavored quantity the source tables nevertheless plot as a
/// distance) is accepted for fidelity experiments with its diagonal forced
/// to zero. Other kinds are rejected.
pub fn mds_input_from_matrix(
    matrix: &DisagreementMatrix,
) -> Result<(Vec<String>, Vec<Vec<f64>>), AnalysisError> {
    match matrix.kind {
        MatrixKind::JaccardDissim | MatrixKind::ScaledL0 => {}
        other => return Err(AnalysisError::UnsupportedMdsInput(other)),
    }
    let n = matrix.methods.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                out[i][j] = 0.0;
                continue;
            }
            out[i][j] = matrix.values[i][j].ok_or(AnalysisError::MissingCell(i, j))?;
        }
    }
    Ok((matrix.methods.clone(), out))
}
