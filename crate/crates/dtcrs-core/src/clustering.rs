//! Gaussian-mixture soft clustering with BIC model selection.
//!
//! Layer-1 clustering is seeded by sub-question embeddings; deeper layers
//! select their component count by BIC over seeded random initializations.
//! A RAPTOR-style two-stage (global then local) clustering backs the
//! hierarchical baseline.

mod em;

pub use em::em_fit;

use crate::error::{Error, Result};
use crate::model::derive_seed;
use nalgebra::DMatrix;
use std::ops::RangeInclusive;

/// A fitted Gaussian mixture.
#[derive(Debug, Clone)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    /// Maximized log-likelihood ln L of the fit.
    pub log_likelihood: f64,
    pub n: usize,
    pub dim: usize,
    /// A covariance hit the regularization floor during fitting.
    pub regularized: bool,
    pub converged: bool,
    pub iterations: usize,
    /// The means the fit started from (seeds are kept exactly).
    pub init_means: Vec<Vec<f64>>,
    /// Per-E-step log-likelihood trace.
    pub ll_trace: Vec<f64>,
}

impl GmmModel {
    pub fn component_count(&self) -> usize {
        self.weights.len()
    }

    /// Free parameters: (M-1) mixing weights, M·D means, M·D(D+1)/2
    /// covariance entries.
    pub fn param_count(&self) -> usize {
        let m = self.component_count();
        let d = self.dim;
        (m - 1) + m * d + m * d * (d + 1) / 2
    }
}

/// Posterior responsibilities, with thresholded memberships once
/// [`soft_assign`] has run.
#[derive(Debug, Clone)]
pub struct SoftAssignment {
    /// n x M rows of normalized posteriors.
    pub responsibilities: Vec<Vec<f64>>,
    /// Per-point component ids; empty until thresholded.
    pub memberships: Vec<Vec<usize>>,
}

/// Normalized posterior responsibilities of `points` under `model`,
/// computed in log space. Memberships are left empty.
pub fn responsibilities(model: &GmmModel, points: &[Vec<f64>]) -> Result<SoftAssignment> {
    if points.iter().any(|p| p.len() != model.dim) {
        return Err(Error::invalid(format!(
            "point dim differs from model dim {}",
            model.dim
        )));
    }
    let rows = em::posterior_rows(model, points)?;
    Ok(SoftAssignment {
        responsibilities: rows,
        memberships: Vec::new(),
    })
}

/// Threshold responsibilities into memberships: a point belongs to every
/// component with responsibility >= threshold; a point clearing none falls
/// back to its argmax component (ties to the lowest id).
pub fn soft_assign(assignment: &SoftAssignment, threshold: f64) -> Result<SoftAssignment> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid("threshold must lie in (0, 1]"));
    }
    let memberships = assignment
        .responsibilities
        .iter()
        .map(|row| {
            let mut members: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, &r)| r >= threshold)
                .map(|(idx, _)| idx)
                .collect();
            if members.is_empty() {
                let mut best = 0usize;
                for (idx, &r) in row.iter().enumerate() {
                    if r > row[best] {
                        best = idx;
                    }
                }
                members.push(best);
            }
            members
        })
        .collect();
    Ok(SoftAssignment {
        responsibilities: assignment.responsibilities.clone(),
        memberships,
    })
}

/// Bayesian Information Criterion: ln(n)·p − 2·ln(L̂). Lower is better.
pub fn bic(model: &GmmModel) -> Result<f64> {
    if model.n == 0 {
        return Err(Error::invalid("BIC is undefined for zero data points"));
    }
    Ok((model.n as f64).ln() * model.param_count() as f64 - 2.0 * model.log_likelihood)
}

/// Fit every M in `m_range` with seeded random initialization and return
/// the BIC minimizer (ties resolve to the smaller M).
pub fn select_clusters_bic(
    points: &[Vec<f64>],
    m_range: RangeInclusive<usize>,
    rng_seed: u64,
) -> Result<(usize, GmmModel)> {
    let (lo, hi) = (*m_range.start(), *m_range.end());
    if lo < 1 || hi > points.len() || lo > hi {
        return Err(Error::invalid(format!(
            "cluster range {lo}..={hi} invalid for {} points",
            points.len()
        )));
    }
    let mut best: Option<(usize, GmmModel, f64)> = None;
    for m in lo..=hi {
        let model = em_fit(points, m, None, derive_seed(rng_seed, &format!("bic-m{m}")))?;
        let score = bic(&model)?;
        let better = match &best {
            None => true,
            Some((_, _, best_score)) => score < *best_score,
        };
        if better {
            best = Some((m, model, score));
        }
    }
    let (m, model, _) = best.expect("non-empty range produced at least one fit");
    Ok((m, model))
}

/// Invert per-point memberships into per-component point lists.
/// Empty components are dropped; order follows component id.
pub fn clusters_from_memberships(memberships: &[Vec<usize>], m: usize) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (point, members) in memberships.iter().enumerate() {
        for &component in members {
            clusters[component].push(point);
        }
    }
    clusters.retain(|c| !c.is_empty());
    clusters
}

/// RAPTOR-style two-stage baseline: a global BIC-selected mixture
/// partitions the points, then every cluster above `size_cap` is re-split
/// locally (again BIC-selected) until all emitted clusters fit the cap.
pub fn hierarchical_cluster(
    points: &[Vec<f64>],
    rng_seed: u64,
    size_cap: usize,
    threshold: f64,
) -> Result<Vec<Vec<usize>>> {
    if points.len() < 2 {
        return Err(Error::invalid("hierarchical clustering needs >= 2 points"));
    }
    if size_cap == 0 {
        return Err(Error::invalid("size cap must be positive"));
    }
    let indices: Vec<usize> = (0..points.len()).collect();
    let mut emitted = Vec::new();
    split_global(points, &indices, rng_seed, size_cap, threshold, &mut emitted)?;
    Ok(emitted)
}

const MAX_BIC_SWEEP: usize = 50;

fn split_global(
    points: &[Vec<f64>],
    indices: &[usize],
    rng_seed: u64,
    size_cap: usize,
    threshold: f64,
    emitted: &mut Vec<Vec<usize>>,
) -> Result<()> {
    let subset: Vec<Vec<f64>> = indices.iter().map(|&i| points[i].clone()).collect();
    let max_m = MAX_BIC_SWEEP.min(subset.len().saturating_sub(1)).max(1);
    let (m, model) = select_clusters_bic(&subset, 1..=max_m, rng_seed)?;
    let assignment = soft_assign(&responsibilities(&model, &subset)?, threshold)?;
    let clusters = clusters_from_memberships(&assignment.memberships, m);
    for (slot, cluster) in clusters.iter().enumerate() {
        let global: Vec<usize> = cluster.iter().map(|&local| indices[local]).collect();
        if global.len() <= size_cap {
            emitted.push(global);
        } else if global.len() == indices.len() && clusters.len() == 1 {
            // No progress; slice deterministically to honor the cap.
            for piece in global.chunks(size_cap) {
                emitted.push(piece.to_vec());
            }
        } else {
            split_local(
                points,
                &global,
                derive_seed(rng_seed, &format!("local-{slot}")),
                size_cap,
                threshold,
                emitted,
                0,
            )?;
        }
    }
    Ok(())
}

fn split_local(
    points: &[Vec<f64>],
    indices: &[usize],
    rng_seed: u64,
    size_cap: usize,
    threshold: f64,
    emitted: &mut Vec<Vec<usize>>,
    depth: usize,
) -> Result<()> {
    let slice_out = |emitted: &mut Vec<Vec<usize>>| {
        for piece in indices.chunks(size_cap) {
            emitted.push(piece.to_vec());
        }
    };
    if depth > 16 {
        slice_out(emitted);
        return Ok(());
    }
    let subset: Vec<Vec<f64>> = indices.iter().map(|&i| points[i].clone()).collect();
    let max_m = MAX_BIC_SWEEP.min(subset.len() - 1).max(2);
    let (m, model) = select_clusters_bic(&subset, 2..=max_m, rng_seed)?;
    let assignment = soft_assign(&responsibilities(&model, &subset)?, threshold)?;
    let clusters = clusters_from_memberships(&assignment.memberships, m);
    if clusters.len() == 1 && clusters[0].len() == indices.len() {
        slice_out(emitted);
        return Ok(());
    }
    for (slot, cluster) in clusters.iter().enumerate() {
        let global: Vec<usize> = cluster.iter().map(|&local| indices[local]).collect();
        if global.len() <= size_cap {
            emitted.push(global);
        } else if global.len() == indices.len() {
            slice_out(emitted);
            return Ok(());
        } else {
            split_local(
                points,
                &global,
                derive_seed(rng_seed, &format!("depth{depth}-{slot}")),
                size_cap,
                threshold,
                emitted,
                depth + 1,
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn blob(rng: &mut StdRng, center: &[f64], sigma: f64, count: usize) -> Vec<Vec<f64>> {
        let normal = Normal::new(0.0, sigma).unwrap();
        (0..count)
            .map(|_| {
                center
                    .iter()
                    .map(|c| c + normal.sample(rng))
                    .collect::<Vec<f64>>()
            })
            .collect()
    }

    #[test]
    fn single_component_is_closed_form() {
        let points = vec![
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![5.0, 0.0],
        ];
        let model = em_fit(&points, 1, None, 0).unwrap();
        assert_eq!(model.weights, vec![1.0]);
        assert!((model.means[0][0] - 3.0).abs() < 1e-9);
        assert!((model.means[0][1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn seeded_blobs_converge_to_their_seeds() {
        let mut rng = StdRng::seed_from_u64(1);
        let mut points = blob(&mut rng, &[-10.0, 0.0], 1.0, 40);
        points.extend(blob(&mut rng, &[10.0, 0.0], 1.0, 40));
        let seeds = vec![vec![-10.0, 0.0], vec![10.0, 0.0]];
        let model = em_fit(&points, 2, Some(&seeds), 0).unwrap();
        assert_eq!(model.init_means, seeds);

        let assignment = responsibilities(&model, &points).unwrap();
        for (i, row) in assignment.responsibilities.iter().enumerate() {
            let own = if i < 40 { 0 } else { 1 };
            assert!(
                row[own] >= 0.99,
                "point {i} responsibility to own blob is {}",
                row[own]
            );
        }
    }

    #[test]
    fn duplicated_points_regularize_without_crash() {
        let points = vec![vec![1.0, 1.0]; 6];
        let model = em_fit(&points, 2, None, 3).unwrap();
        assert!(model.regularized);
    }

    #[test]
    fn m_larger_than_n_is_an_error() {
        let points = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        assert!(em_fit(&points, 3, None, 0).is_err());
        assert!(em_fit(&points, 0, None, 0).is_err());
    }

    #[test]
    fn responsibilities_single_component_all_one() {
        let points = vec![vec![0.0], vec![1.0], vec![2.0]];
        let model = em_fit(&points, 1, None, 0).unwrap();
        let assignment = responsibilities(&model, &points).unwrap();
        for row in &assignment.responsibilities {
            assert_eq!(row.len(), 1);
            assert!((row[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn equidistant_point_splits_evenly() {
        // Symmetric hand-built model: equal weights, equal covariances,
        // means mirrored about the probe point.
        let model = GmmModel {
            weights: vec![0.5, 0.5],
            means: vec![vec![-2.0], vec![2.0]],
            covariances: vec![DMatrix::from_element(1, 1, 1.0); 2],
            log_likelihood: 0.0,
            n: 2,
            dim: 1,
            regularized: false,
            converged: true,
            iterations: 0,
            init_means: Vec::new(),
            ll_trace: Vec::new(),
        };
        let assignment = responsibilities(&model, &[vec![0.0]]).unwrap();
        assert!((assignment.responsibilities[0][0] - 0.5).abs() < 1e-9);
        assert!((assignment.responsibilities[0][1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn responsibilities_match_dense_density_oracle() {
        // Random 3-component model fit, then posteriors recomputed with
        // naive dense arithmetic (explicit inverse via adjugate-free
        // Gauss-Jordan) and compared within 1e-9.
        let mut rng = StdRng::seed_from_u64(8);
        let mut points = blob(&mut rng, &[0.0, 0.0], 1.0, 20);
        points.extend(blob(&mut rng, &[6.0, 1.0], 1.2, 20));
        points.extend(blob(&mut rng, &[-3.0, 7.0], 0.8, 20));
        let model = em_fit(&points, 3, None, 11).unwrap();

        let probes: Vec<Vec<f64>> = (0..5)
            .map(|_| vec![rng.gen_range(-5.0..8.0), rng.gen_range(-3.0..8.0)])
            .collect();
        let assignment = responsibilities(&model, &probes).unwrap();

        for (probe, row) in probes.iter().zip(&assignment.responsibilities) {
            let mut densities = Vec::new();
            for component in 0..3 {
                let cov = &model.covariances[component];
                let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
                let inv = [
                    [cov[(1, 1)] / det, -cov[(0, 1)] / det],
                    [-cov[(1, 0)] / det, cov[(0, 0)] / det],
                ];
                let dx = probe[0] - model.means[component][0];
                let dy = probe[1] - model.means[component][1];
                let maha =
                    dx * (inv[0][0] * dx + inv[0][1] * dy) + dy * (inv[1][0] * dx + inv[1][1] * dy);
                let density = (1.0 / (2.0 * std::f64::consts::PI * det.sqrt()))
                    * (-0.5 * maha).exp();
                densities.push(model.weights[component] * density);
            }
            let total: f64 = densities.iter().sum();
            for (got, expected) in row.iter().zip(densities.iter().map(|d| d / total)) {
                assert!(
                    (got - expected).abs() < 1e-9,
                    "posterior {got} vs oracle {expected}"
                );
            }
        }
    }

    #[test]
    fn soft_assign_threshold_semantics() {
        let assignment = SoftAssignment {
            responsibilities: vec![
                vec![0.6, 0.4],
                vec![0.5, 0.5],
                vec![0.4, 0.35, 0.25],
            ],
            memberships: Vec::new(),
        };
        let assigned = soft_assign(&assignment, 0.5).unwrap();
        assert_eq!(assigned.memberships[0], vec![0]);
        assert_eq!(assigned.memberships[1], vec![0, 1]);
        assert_eq!(assigned.memberships[2], vec![0]);
    }

    #[test]
    fn bic_zero_case_and_formula() {
        let points = vec![vec![0.5, 1.5], vec![1.5, 0.5], vec![1.0, 1.0], vec![2.0, 2.0]];
        let model = em_fit(&points, 1, None, 0).unwrap();
        let expected = (4.0f64).ln() * model.param_count() as f64 - 2.0 * model.log_likelihood;
        assert!((bic(&model).unwrap() - expected).abs() < 1e-12);

        // Closed-form Gaussian likelihood oracle for M = 1: mean and
        // covariance are the sample moments (plus the regularization floor).
        let n = points.len() as f64;
        let mean = [1.25f64, 1.25];
        let mut cov = [[0.0f64; 2]; 2];
        for p in &points {
            let d = [p[0] - mean[0], p[1] - mean[1]];
            for r in 0..2 {
                for c in 0..2 {
                    cov[r][c] += d[r] * d[c] / n;
                }
            }
        }
        cov[0][0] += 1e-6;
        cov[1][1] += 1e-6;
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        let inv = [
            [cov[1][1] / det, -cov[0][1] / det],
            [-cov[1][0] / det, cov[0][0] / det],
        ];
        let mut ll = 0.0;
        for p in &points {
            let d = [p[0] - mean[0], p[1] - mean[1]];
            let maha = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1])
                + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
            ll += -0.5 * (2.0 * (2.0 * std::f64::consts::PI).ln() + det.ln() + maha);
        }
        let oracle = n.ln() * model.param_count() as f64 - 2.0 * ll;
        assert!(
            (bic(&model).unwrap() - oracle).abs() < 1e-9,
            "bic {} vs oracle {oracle}",
            bic(&model).unwrap()
        );
    }

    #[test]
    fn bic_sweep_recovers_three_blobs() {
        let mut rng = StdRng::seed_from_u64(17);
        let mut points = blob(&mut rng, &[0.0, 0.0], 0.5, 30);
        points.extend(blob(&mut rng, &[8.0, 0.0], 0.5, 30));
        points.extend(blob(&mut rng, &[4.0, 7.0], 0.5, 30));
        let mut scores = Vec::new();
        for m in 1..=5 {
            let model = em_fit(&points, m, None, derive_seed(2, &format!("bic-m{m}"))).unwrap();
            scores.push((m, bic(&model).unwrap()));
        }
        let argmin = scores
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        assert_eq!(argmin, 3);

        let (selected, _) = select_clusters_bic(&points, 1..=6, 2).unwrap();
        assert_eq!(selected, 3);
    }

    #[test]
    fn select_handles_two_points_and_is_deterministic() {
        let points = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let (m, _) = select_clusters_bic(&points, 1..=2, 9).unwrap();
        assert!(m >= 1 && m <= 2);

        let mut rng = StdRng::seed_from_u64(30);
        let data = blob(&mut rng, &[0.0, 0.0], 1.0, 25);
        let (m1, model1) = select_clusters_bic(&data, 1..=5, 77).unwrap();
        let (m2, model2) = select_clusters_bic(&data, 1..=5, 77).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(model1.means, model2.means);
        assert_eq!(model1.weights, model2.weights);

        assert!(select_clusters_bic(&data, 1..=0, 0).is_err());
    }

    #[test]
    fn hierarchical_matches_flat_on_small_blobs() {
        let points = vec![
            vec![0.0, 0.0],
            vec![0.3, 0.1],
            vec![9.0, 9.0],
            vec![9.2, 8.8],
        ];
        let clusters = hierarchical_cluster(&points, 5, 10, 0.5).unwrap();
        let (m, model) = select_clusters_bic(&points, 1..=3, 5).unwrap();
        let flat = clusters_from_memberships(
            &soft_assign(&responsibilities(&model, &points).unwrap(), 0.5)
                .unwrap()
                .memberships,
            m,
        );
        let canon = |mut cs: Vec<Vec<usize>>| {
            for c in cs.iter_mut() {
                c.sort();
            }
            cs.sort();
            cs
        };
        assert_eq!(canon(clusters), canon(flat));
    }

    #[test]
    fn hierarchical_respects_size_cap() {
        let mut rng = StdRng::seed_from_u64(40);
        let mut points = Vec::new();
        for b in 0..6 {
            let angle = b as f64;
            points.extend(blob(
                &mut rng,
                &[angle.cos() * 20.0, angle.sin() * 20.0],
                0.6,
                50,
            ));
        }
        let clusters = hierarchical_cluster(&points, 8, 10, 0.5).unwrap();
        assert!(clusters.iter().all(|c| c.len() <= 10));
        let covered: std::collections::HashSet<usize> =
            clusters.iter().flatten().copied().collect();
        assert_eq!(covered.len(), points.len());
    }

    #[test]
    fn single_blob_is_one_cluster() {
        let mut rng = StdRng::seed_from_u64(50);
        let points = blob(&mut rng, &[1.0, 1.0], 0.4, 8);
        let clusters = hierarchical_cluster(&points, 3, 10, 0.5).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].len(), 8);
    }

    #[test]
    fn em_loglikelihood_is_monotone() {
        let mut rng = StdRng::seed_from_u64(60);
        for trial in 0..20 {
            let d = rng.gen_range(2..5);
            let spread: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut points = blob(&mut rng, &spread, 1.0, 25);
            let far: Vec<f64> = spread.iter().map(|v| v + 5.0).collect();
            points.extend(blob(&mut rng, &far, 1.5, 25));
            let m = rng.gen_range(1..4);
            let model = em_fit(&points, m, None, trial).unwrap();
            for pair in model.ll_trace.windows(2) {
                assert!(
                    pair[1] >= pair[0] - 1e-7,
                    "trial {trial}: lnL dropped {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn responsibility_rows_sum_to_one() {
        let mut rng = StdRng::seed_from_u64(70);
        for trial in 0..20 {
            let mut points = blob(&mut rng, &[0.0, 0.0, 0.0], 2.0, 30);
            points.extend(blob(&mut rng, &[4.0, -2.0, 1.0], 1.0, 20));
            let m = rng.gen_range(1..5);
            let model = em_fit(&points, m, None, trial + 100).unwrap();
            let assignment = responsibilities(&model, &points).unwrap();
            for row in &assignment.responsibilities {
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-9, "row sums to {sum}");
            }
        }
    }

    #[test]
    fn threshold_above_half_gives_single_membership() {
        let assignment = SoftAssignment {
            responsibilities: vec![vec![0.51, 0.49], vec![0.2, 0.3, 0.5]],
            memberships: Vec::new(),
        };
        let assigned = soft_assign(&assignment, 0.51).unwrap();
        for members in &assigned.memberships {
            assert_eq!(members.len(), 1);
        }
        assert!(soft_assign(&assignment, 0.0).is_err());
        assert!(soft_assign(&assignment, 1.2).is_err());
    }
}
