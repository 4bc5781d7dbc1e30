//! Expectation-maximization for full-covariance Gaussian mixtures.
//!
//! All densities are computed in log space through Cholesky factors.
//! Covariances carry a diagonal regularization floor; collapse (e.g.
//! duplicated points) is flagged, never fatal.

use super::GmmModel;
use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand::{Rng, SeedableRng};

pub(super) const REG_FLOOR: f64 = 1e-6;
const CONVERGENCE_TOL: f64 = 1e-6;
const MAX_ITERATIONS: usize = 200;
const LOG_2PI: f64 = 1.837877066409345;

/// Fit an M-component mixture. `init_means`, when given, seeds the
/// component means exactly; otherwise distance-weighted (k-means++ style)
/// seeding runs under the seeded RNG.
pub fn em_fit(
    points: &[Vec<f64>],
    m: usize,
    init_means: Option<&[Vec<f64>]>,
    rng_seed: u64,
) -> Result<GmmModel> {
    let n = points.len();
    if m == 0 {
        return Err(Error::invalid("component count must be at least 1"));
    }
    if n < m {
        return Err(Error::invalid(format!(
            "cannot fit {m} components to {n} points"
        )));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("points must share a positive dimension"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("points must be finite"));
    }
    if let Some(seeds) = init_means {
        if seeds.len() != m || seeds.iter().any(|s| s.len() != dim) {
            return Err(Error::invalid("seed means must be M vectors of point dim"));
        }
    }

    let data_variance = per_dim_variance(points, dim);
    let means: Vec<Vec<f64>> = match init_means {
        Some(seeds) => seeds.to_vec(),
        None => kmeanspp_seeds(points, m, rng_seed),
    };
    let init_means_copy = means.clone();
    let mut means = means;
    let mut weights = vec![1.0 / m as f64; m];
    let mut covariances: Vec<DMatrix<f64>> = (0..m)
        .map(|_| {
            DMatrix::from_diagonal(&DVector::from_iterator(
                dim,
                data_variance.iter().map(|v| v.max(REG_FLOOR)),
            ))
        })
        .collect();

    let mut regularized = false;
    let mut ll_trace: Vec<f64> = Vec::new();
    let mut responsibilities = vec![vec![0.0f64; m]; n];
    let mut converged = false;
    let mut iterations = 0usize;

    for iteration in 0..MAX_ITERATIONS {
        iterations = iteration + 1;

        // E-step.
        let factors = factorize(&covariances, &mut regularized)?;
        let log_likelihood =
            e_step(points, &weights, &means, &factors, &mut responsibilities);
        if let Some(&previous) = ll_trace.last() {
            if (log_likelihood - previous).abs() < CONVERGENCE_TOL {
                ll_trace.push(log_likelihood);
                converged = true;
                break;
            }
        }
        ll_trace.push(log_likelihood);

        // M-step.
        for component in 0..m {
            let mass: f64 = responsibilities.iter().map(|row| row[component]).sum();
            if mass < 1e-12 {
                // Starved component: keep its parameters, let the weight
                // reflect the (near-zero) mass.
                weights[component] = mass.max(1e-300) / n as f64;
                regularized = true;
                continue;
            }
            weights[component] = mass / n as f64;
            let mut mean = vec![0.0f64; dim];
            for (point, row) in points.iter().zip(&responsibilities) {
                let r = row[component];
                for (m_d, p_d) in mean.iter_mut().zip(point) {
                    *m_d += r * p_d;
                }
            }
            mean.iter_mut().for_each(|v| *v /= mass);

            let mut scatter = DMatrix::zeros(dim, dim);
            for (point, row) in points.iter().zip(&responsibilities) {
                let r = row[component];
                if r == 0.0 {
                    continue;
                }
                let diff = DVector::from_iterator(dim, point.iter().zip(&mean).map(|(p, mu)| p - mu));
                scatter.ger(r, &diff, &diff, 1.0);
            }
            scatter /= mass;
            // Collapse shows up as a vanishing diagonal before the floor.
            if scatter.diagonal().iter().all(|v| *v < REG_FLOOR) {
                regularized = true;
            }
            for d in 0..dim {
                scatter[(d, d)] += REG_FLOOR;
            }
            covariances[component] = scatter;
            means[component] = mean;
        }
    }

    if !converged {
        // Record the final likelihood under the last parameters.
        let factors = factorize(&covariances, &mut regularized)?;
        let log_likelihood =
            e_step(points, &weights, &means, &factors, &mut responsibilities);
        ll_trace.push(log_likelihood);
    }

    Ok(GmmModel {
        weights,
        means,
        covariances,
        log_likelihood: *ll_trace.last().expect("at least one E-step ran"),
        n,
        dim,
        regularized,
        converged,
        iterations,
        init_means: init_means_copy,
        ll_trace,
    })
}

/// Normalized posteriors of `points` under a fitted model.
pub(super) fn posterior_rows(model: &GmmModel, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut regularized = false;
    let factors = factorize(&model.covariances, &mut regularized)?;
    let mut rows = vec![vec![0.0f64; model.component_count()]; points.len()];
    e_step(points, &model.weights, &model.means, &factors, &mut rows);
    Ok(rows)
}

struct ComponentFactor {
    lower: DMatrix<f64>,
    log_det: f64,
}

/// Cholesky-factorize every covariance, inflating the diagonal until the
/// matrix is positive-definite.
fn factorize(
    covariances: &[DMatrix<f64>],
    regularized: &mut bool,
) -> Result<Vec<ComponentFactor>> {
    covariances
        .iter()
        .map(|cov| {
            let mut attempt = cov.clone();
            let mut bump = REG_FLOOR;
            for _ in 0..16 {
                if let Some(chol) = Cholesky::new(attempt.clone()) {
                    let lower = chol.unpack();
                    let log_det = 2.0 * lower.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                    return Ok(ComponentFactor { lower, log_det });
                }
                *regularized = true;
                bump *= 10.0;
                for d in 0..attempt.nrows() {
                    attempt[(d, d)] += bump;
                }
            }
            Err(Error::invalid("covariance could not be regularized"))
        })
        .collect()
}

/// Fill `responsibilities` with normalized posteriors; returns ln L.
fn e_step(
    points: &[Vec<f64>],
    weights: &[f64],
    means: &[Vec<f64>],
    factors: &[ComponentFactor],
    responsibilities: &mut [Vec<f64>],
) -> f64 {
    let m = weights.len();
    let dim = means[0].len();
    let mut log_likelihood = 0.0;
    for (point, row) in points.iter().zip(responsibilities.iter_mut()) {
        for component in 0..m {
            let diff = DVector::from_iterator(
                dim,
                point.iter().zip(&means[component]).map(|(p, mu)| p - mu),
            );
            let solved = factors[component]
                .lower
                .solve_lower_triangular(&diff)
                .expect("lower-triangular solve over a PD factor");
            let mahalanobis = solved.norm_squared();
            let log_density =
                -0.5 * (dim as f64 * LOG_2PI + factors[component].log_det + mahalanobis);
            row[component] = weights[component].max(1e-300).ln() + log_density;
        }
        let max_log = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|v| (v - max_log).exp()).sum();
        let lse = max_log + sum_exp.ln();
        log_likelihood += lse;
        row.iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    log_likelihood
}

fn per_dim_variance(points: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let n = points.len() as f64;
    let mut mean = vec![0.0f64; dim];
    for point in points {
        for (m, p) in mean.iter_mut().zip(point) {
            *m += p;
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut variance = vec![0.0f64; dim];
    for point in points {
        for ((v, p), m) in variance.iter_mut().zip(point).zip(&mean) {
            *v += (p - m) * (p - m);
        }
    }
    variance.iter_mut().for_each(|v| *v /= n);
    variance
}

/// Distance-weighted seeding: first center uniform, later centers sampled
/// with probability proportional to squared distance to the nearest center.
fn kmeanspp_seeds(points: &[Vec<f64>], m: usize, rng_seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n = points.len();
    let mut seeds: Vec<Vec<f64>> = Vec::with_capacity(m);
    seeds.push(points[rng.gen_range(0..n)].clone());
    let mut best_dist: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &seeds[0]))
        .collect();
    while seeds.len() < m {
        let total: f64 = best_dist.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with a chosen seed.
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, d) in best_dist.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        seeds.push(points[next].clone());
        for (slot, point) in best_dist.iter_mut().zip(points) {
            let d = squared_distance(point, seeds.last().unwrap());
            if d < *slot {
                *slot = d;
            }
        }
    }
    seeds
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
