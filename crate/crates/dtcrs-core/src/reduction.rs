//! Dimensionality reduction ahead of clustering.
//!
//! Chunk and sub-question embeddings are reduced in one joint fit so seeds
//! and points land in the same space. Two backends sit behind one contract
//! (same shapes, same row order, same component rule): `manifold` is a
//! UMAP-style projection, `linear` is a centered principal-axes projection
//! that is exactly reproducible and permutation-equivariant, which the
//! deterministic test suites rely on.

mod umap;

use crate::embed::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::model::{PipelineConfig, ReductionBackend};
use nalgebra::{DMatrix, SymmetricEigen};

/// Settings for one reduction fit.
#[derive(Debug, Clone)]
pub struct ReductionParams {
    pub n_neighbors: usize,
    pub target_dim_cap: usize,
    pub backend: ReductionBackend,
    pub rng_seed: u64,
}

impl Default for ReductionParams {
    fn default() -> Self {
        ReductionParams {
            n_neighbors: 10,
            target_dim_cap: 10,
            backend: ReductionBackend::Manifold,
            rng_seed: 0,
        }
    }
}

impl ReductionParams {
    pub fn from_config(config: &PipelineConfig) -> Self {
        ReductionParams {
            n_neighbors: config.umap_n_neighbors,
            target_dim_cap: config.umap_dim,
            backend: config.reduction_backend,
            rng_seed: config.rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_neighbors < 2 {
            return Err(Error::invalid("n_neighbors must be at least 2"));
        }
        if self.target_dim_cap == 0 {
            return Err(Error::invalid("target_dim_cap must be at least 1"));
        }
        Ok(())
    }
}

/// Jointly reduced rows: chunks first, then sub-questions.
#[derive(Debug, Clone)]
pub struct ReducedBatch {
    pub vectors: Vec<Vec<f64>>,
    pub n_components: usize,
    /// Boundary between chunk rows and sub-question rows.
    pub split_index: usize,
    /// True when the input was too small to reduce and rows pass through.
    pub skipped: bool,
}

impl ReducedBatch {
    pub fn chunk_rows(&self) -> &[Vec<f64>] {
        &self.vectors[..self.split_index]
    }

    pub fn seed_rows(&self) -> &[Vec<f64>] {
        &self.vectors[self.split_index..]
    }
}

/// Target dimension: `min(cap, input_count - 2)`, undefined below 3 inputs.
pub fn n_components_rule(input_count: usize, cap: usize) -> Result<usize> {
    if input_count < 3 {
        return Err(Error::invalid(format!(
            "reduction needs at least 3 inputs, got {input_count}"
        )));
    }
    Ok(cap.min(input_count - 2))
}

/// Reduce chunk and sub-question embeddings in one fit. Output rows
/// correspond 1:1 and in order to input rows; `split_index` is the chunk
/// count. Fewer than 3 combined inputs pass through unreduced with the
/// `skipped` flag set.
pub fn reduce_joint(
    chunks: &EmbeddingBatch,
    subqs: &EmbeddingBatch,
    params: &ReductionParams,
) -> Result<ReducedBatch> {
    params.validate()?;
    if let (Some(a), Some(b)) = (chunks.dim(), subqs.dim()) {
        if a != b {
            return Err(Error::ProviderContract(format!(
                "chunk dim {a} differs from sub-question dim {b}"
            )));
        }
    }
    let split_index = chunks.len();
    let rows: Vec<Vec<f64>> = chunks
        .vectors
        .iter()
        .chain(subqs.vectors.iter())
        .map(|v| v.values().to_vec())
        .collect();
    let count = rows.len();
    if count == 0 {
        return Err(Error::invalid("nothing to reduce"));
    }
    let dim = rows[0].len();

    if count < 3 {
        return Ok(ReducedBatch {
            vectors: rows,
            n_components: dim,
            split_index,
            skipped: true,
        });
    }

    let n_components = n_components_rule(count, params.target_dim_cap)?.min(dim);
    let vectors = match params.backend {
        ReductionBackend::Linear => linear_project(&rows, n_components),
        ReductionBackend::Manifold => {
            umap::umap_project(&rows, n_components, params.n_neighbors, params.rng_seed)
        }
    };
    Ok(ReducedBatch {
        vectors,
        n_components,
        split_index,
        skipped: false,
    })
}

/// Convenience wrapper for reducing one batch with no seed rows.
pub fn reduce_batch(batch: &EmbeddingBatch, params: &ReductionParams) -> Result<ReducedBatch> {
    reduce_joint(batch, &EmbeddingBatch::empty(), params)
}

/// Project rows onto the top principal axes of their covariance.
///
/// Eigenvectors are sign-canonicalized (largest-magnitude component made
/// positive) so the projection is a pure function of the data set.
fn linear_project(rows: &[Vec<f64>], n_components: usize) -> Vec<Vec<f64>> {
    let n = rows.len();
    let dim = rows[0].len();
    let mut mean = vec![0.0f64; dim];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |i, j| rows[i][j] - mean[j]);
    let denominator = (n - 1) as f64;
    let cov = centered.transpose() * &centered / denominator;
    let eigen = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));

    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(n_components);
    for &col in order.iter().take(n_components) {
        let axis = eigen.eigenvectors.column(col);
        let mut best = 0usize;
        for i in 1..dim {
            if axis[i].abs() > axis[best].abs() {
                best = i;
            }
        }
        let sign = if axis[best] < 0.0 { -1.0 } else { 1.0 };
        axes.push((0..dim).map(|i| axis[i] * sign).collect());
    }

    rows.iter()
        .map(|row| {
            axes.iter()
                .map(|axis| {
                    axis.iter()
                        .zip(row.iter().zip(&mean))
                        .map(|(a, (v, m))| a * (v - m))
                        .sum()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EmbeddingVector;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn batch_from(rows: Vec<Vec<f64>>) -> EmbeddingBatch {
        let texts = (0..rows.len()).map(|i| format!("t{i}")).collect();
        let vectors = rows
            .into_iter()
            .map(|r| EmbeddingVector::new(r).unwrap())
            .collect();
        EmbeddingBatch::new(texts, vectors).unwrap()
    }

    /// Two unit-norm blobs in 16 dims around orthogonal base directions.
    fn two_blobs(rng: &mut StdRng, per_blob: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for blob in 0..2 {
            for _ in 0..per_blob {
                let mut row = vec![0.0f64; 16];
                row[blob * 8] = 1.0;
                for value in row.iter_mut() {
                    *value += rng.gen_range(-0.05..0.05);
                }
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                row.iter_mut().for_each(|v| *v /= norm);
                rows.push(row);
                labels.push(blob);
            }
        }
        (rows, labels)
    }

    #[test]
    fn component_rule_matches_formula() {
        assert_eq!(n_components_rule(252, 10).unwrap(), 10);
        assert_eq!(n_components_rule(8, 10).unwrap(), 6);
        assert_eq!(n_components_rule(3, 10).unwrap(), 1);
        assert!(n_components_rule(2, 10).is_err());
    }

    fn linear_params(seed: u64) -> ReductionParams {
        ReductionParams {
            backend: ReductionBackend::Linear,
            rng_seed: seed,
            ..Default::default()
        }
    }

    #[test]
    fn joint_reduction_orders_rows_and_sets_split() {
        let mut rng = StdRng::seed_from_u64(1);
        let chunk_rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let subq_rows: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let reduced = reduce_joint(
            &batch_from(chunk_rows),
            &batch_from(subq_rows),
            &linear_params(0),
        )
        .unwrap();
        assert_eq!(reduced.vectors.len(), 8);
        assert_eq!(reduced.split_index, 5);
        assert_eq!(reduced.n_components, 6);
        assert!(!reduced.skipped);
        assert!(reduced.vectors.iter().all(|v| v.len() == 6));
    }

    #[test]
    fn tiny_inputs_pass_through() {
        let reduced = reduce_joint(
            &batch_from(vec![vec![1.0, 0.0]]),
            &batch_from(vec![vec![0.0, 1.0]]),
            &linear_params(0),
        )
        .unwrap();
        assert!(reduced.skipped);
        assert_eq!(reduced.n_components, 2);
        assert_eq!(reduced.vectors[0], vec![1.0, 0.0]);
    }

    #[test]
    fn dim_mismatch_is_contract_error() {
        let err = reduce_joint(
            &batch_from(vec![vec![1.0, 0.0]]),
            &batch_from(vec![vec![0.0, 1.0, 0.0]]),
            &linear_params(0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ProviderContract(_)));
    }

    #[test]
    fn linear_backend_preserves_cluster_separation() {
        let mut rng = StdRng::seed_from_u64(7);
        let (rows, labels) = two_blobs(&mut rng, 10);
        let reduced = reduce_batch(&batch_from(rows), &linear_params(0)).unwrap();

        // Brute-force pairwise-distance oracle on the reduced points.
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let mut max_within: f64 = 0.0;
        let mut min_between = f64::INFINITY;
        for i in 0..reduced.vectors.len() {
            for j in (i + 1)..reduced.vectors.len() {
                let d = dist(&reduced.vectors[i], &reduced.vectors[j]);
                if labels[i] == labels[j] {
                    max_within = max_within.max(d);
                } else {
                    min_between = min_between.min(d);
                }
            }
        }
        assert!(
            max_within < min_between,
            "within {max_within} >= between {min_between}"
        );
    }

    #[test]
    fn linear_backend_is_permutation_equivariant() {
        let mut rng = StdRng::seed_from_u64(13);
        let rows: Vec<Vec<f64>> = (0..9)
            .map(|_| (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let reduced = reduce_batch(&batch_from(rows.clone()), &linear_params(0)).unwrap();

        let perm = [3usize, 0, 7, 1, 8, 2, 5, 6, 4];
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let reduced_perm = reduce_batch(&batch_from(permuted), &linear_params(0)).unwrap();

        for (out_idx, &src_idx) in perm.iter().enumerate() {
            for (a, b) in reduced_perm.vectors[out_idx]
                .iter()
                .zip(&reduced.vectors[src_idx])
            {
                assert!((a - b).abs() < 1e-9, "row moved under permutation");
            }
        }
    }

    #[test]
    fn linear_backend_is_deterministic() {
        let mut rng = StdRng::seed_from_u64(99);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let first = reduce_batch(&batch_from(rows.clone()), &linear_params(5)).unwrap();
        let second = reduce_batch(&batch_from(rows), &linear_params(5)).unwrap();
        assert_eq!(first.vectors, second.vectors);
    }

    #[test]
    fn manifold_backend_is_seed_deterministic_with_correct_shape() {
        let mut rng = StdRng::seed_from_u64(21);
        let (rows, _) = two_blobs(&mut rng, 12);
        let params = ReductionParams {
            backend: ReductionBackend::Manifold,
            rng_seed: 4,
            ..Default::default()
        };
        let first = reduce_batch(&batch_from(rows.clone()), &params).unwrap();
        let second = reduce_batch(&batch_from(rows), &params).unwrap();
        assert_eq!(first.vectors, second.vectors);
        assert_eq!(first.n_components, 10);
        assert!(first.vectors.iter().all(|v| v.len() == 10));
    }

    #[test]
    fn manifold_backend_separates_blobs() {
        let mut rng = StdRng::seed_from_u64(33);
        let (rows, labels) = two_blobs(&mut rng, 15);
        let params = ReductionParams {
            backend: ReductionBackend::Manifold,
            rng_seed: 11,
            target_dim_cap: 2,
            ..Default::default()
        };
        let reduced = reduce_batch(&batch_from(rows), &params).unwrap();
        let dist = |a: &[f64], b: &[f64]| -> f64 {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let mut within = Vec::new();
        let mut between = Vec::new();
        for i in 0..reduced.vectors.len() {
            for j in (i + 1)..reduced.vectors.len() {
                let d = dist(&reduced.vectors[i], &reduced.vectors[j]);
                if labels[i] == labels[j] {
                    within.push(d);
                } else {
                    between.push(d);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&within) < mean(&between),
            "mean within {} >= mean between {}",
            mean(&within),
            mean(&between)
        );
    }
}
