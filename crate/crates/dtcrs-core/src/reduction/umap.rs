//! UMAP-style manifold projection.
//!
//! Standard construction: exact cosine k-nearest-neighbor graph, smoothed
//! into a fuzzy simplicial set (per-point bandwidth calibrated so the
//! membership mass equals log2(k)), symmetrized by fuzzy union, then laid
//! out by negative-sampling SGD over the edge list. Initialization is the
//! principal-axes projection scaled into [-10, 10], so runs are fully
//! determined by the seed.

use rand_chacha::ChaCha8Rng;
use rand::{Rng, SeedableRng};
use std::collections::{HashMap, HashSet};

const SMOOTH_K_TOLERANCE: f64 = 1e-5;
const MIN_K_DIST_SCALE: f64 = 1e-3;
const NEGATIVE_SAMPLE_RATE: usize = 5;
const INITIAL_ALPHA: f64 = 1.0;
const GRAD_CLIP: f64 = 4.0;
// Curve parameters fitted for min_dist = 0.1, spread = 1.0.
const CURVE_A: f64 = 1.576943460405378;
const CURVE_B: f64 = 0.8950608781227859;

pub(crate) fn umap_project(
    rows: &[Vec<f64>],
    n_components: usize,
    n_neighbors: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let n = rows.len();
    let k = n_neighbors.min(n - 1).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let (neighbors, distances) = knn_cosine(rows, k);
    let edges = fuzzy_simplicial_set(&neighbors, &distances, n);
    let mut embedding = initial_embedding(rows, n_components, &mut rng);
    optimize_layout(&mut embedding, &edges, n, &mut rng);
    embedding
}

/// Exact k-nearest neighbors under cosine distance (1 - cosine).
fn knn_cosine(rows: &[Vec<f64>], k: usize) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let n = rows.len();
    let norms: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut neighbors = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for i in 0..n {
        let mut scored: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                let denom = norms[i] * norms[j];
                let sim = if denom == 0.0 { 0.0 } else { dot / denom };
                ((1.0 - sim).max(0.0), j)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        scored.truncate(k);
        neighbors.push(scored.iter().map(|&(_, j)| j).collect());
        distances.push(scored.iter().map(|&(d, _)| d).collect());
    }
    (neighbors, distances)
}

/// Per-point bandwidth calibration and fuzzy union.
/// Returns undirected edges (i < j, weight > 0) in a canonical order.
fn fuzzy_simplicial_set(
    neighbors: &[Vec<usize>],
    distances: &[Vec<f64>],
    n: usize,
) -> Vec<(usize, usize, f64)> {
    let mut directed: HashMap<(usize, usize), f64> = HashMap::new();
    for i in 0..n {
        let dists = &distances[i];
        let k = dists.len();
        let rho = dists.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
        let sigma = calibrate_sigma(dists, rho, (k as f64).log2().max(1.0));
        for (slot, &j) in neighbors[i].iter().enumerate() {
            let d = dists[slot];
            let weight = if sigma > 0.0 {
                (-((d - rho).max(0.0)) / sigma).exp()
            } else {
                1.0
            };
            directed.insert((i, j), weight);
        }
    }
    let mut pairs: HashSet<(usize, usize)> = HashSet::new();
    for &(i, j) in directed.keys() {
        pairs.insert(if i < j { (i, j) } else { (j, i) });
    }
    let mut edges: Vec<(usize, usize, f64)> = pairs
        .into_iter()
        .filter_map(|(a, b)| {
            let forward = directed.get(&(a, b)).copied().unwrap_or(0.0);
            let backward = directed.get(&(b, a)).copied().unwrap_or(0.0);
            let union = forward + backward - forward * backward;
            (union > 0.0).then_some((a, b, union))
        })
        .collect();
    edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    edges
}

/// Binary search for the bandwidth whose membership mass hits `target`.
fn calibrate_sigma(dists: &[f64], rho: f64, target: f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    let mut mid = 1.0f64;
    for _ in 0..64 {
        let psum: f64 = dists
            .iter()
            .map(|&d| (-((d - rho).max(0.0)) / mid).exp())
            .sum();
        if (psum - target).abs() < SMOOTH_K_TOLERANCE {
            break;
        }
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() {
                mid * 2.0
            } else {
                (lo + hi) / 2.0
            };
        }
    }
    let mean_dist = dists.iter().sum::<f64>() / dists.len().max(1) as f64;
    mid.max(MIN_K_DIST_SCALE * mean_dist)
}

/// Principal-axes initialization scaled into [-10, 10]; falls back to a
/// seeded uniform cloud when the data has no variance.
fn initial_embedding(
    rows: &[Vec<f64>],
    n_components: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let projected = super::linear_project(rows, n_components);
    let max_abs = projected
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if max_abs == 0.0 {
        return rows
            .iter()
            .map(|_| {
                (0..n_components)
                    .map(|_| rng.gen_range(-10.0..10.0))
                    .collect()
            })
            .collect();
    }
    let scale = 10.0 / max_abs;
    projected
        .into_iter()
        .map(|row| row.into_iter().map(|v| v * scale).collect())
        .collect()
}

struct EdgeSchedule {
    head: usize,
    tail: usize,
    epochs_per_sample: f64,
    next_sample: f64,
    epochs_per_negative: f64,
    next_negative: f64,
}

/// Negative-sampling SGD over the edge list.
fn optimize_layout(
    embedding: &mut [Vec<f64>],
    edges: &[(usize, usize, f64)],
    n: usize,
    rng: &mut ChaCha8Rng,
) {
    if edges.is_empty() || n < 2 {
        return;
    }
    let n_epochs = if n <= 10_000 { 500usize } else { 200 };
    let max_weight = edges.iter().map(|&(_, _, w)| w).fold(f64::MIN, f64::max);

    // An edge with weight w is visited every max_weight / w epochs.
    let mut schedule: Vec<EdgeSchedule> = edges
        .iter()
        .filter_map(|&(head, tail, w)| {
            let samples = n_epochs as f64 * (w / max_weight);
            (samples > 0.0).then(|| {
                let eps = n_epochs as f64 / samples;
                EdgeSchedule {
                    head,
                    tail,
                    epochs_per_sample: eps,
                    next_sample: eps,
                    epochs_per_negative: eps / NEGATIVE_SAMPLE_RATE as f64,
                    next_negative: eps / NEGATIVE_SAMPLE_RATE as f64,
                }
            })
        })
        .collect();

    let dim = embedding[0].len();
    for epoch in 1..=n_epochs {
        let alpha = INITIAL_ALPHA * (1.0 - (epoch - 1) as f64 / n_epochs as f64);
        for entry in schedule.iter_mut() {
            if entry.next_sample > epoch as f64 {
                continue;
            }
            attract(embedding, entry.head, entry.tail, dim, alpha);
            entry.next_sample += entry.epochs_per_sample;

            let n_negative =
                ((epoch as f64 - entry.next_negative) / entry.epochs_per_negative).max(0.0) as usize;
            for _ in 0..n_negative {
                let target = rng.gen_range(0..n);
                if target == entry.head {
                    continue;
                }
                repel(embedding, entry.head, target, dim, alpha);
            }
            entry.next_negative += n_negative as f64 * entry.epochs_per_negative;
        }
    }
}

fn attract(embedding: &mut [Vec<f64>], head: usize, tail: usize, dim: usize, alpha: f64) {
    let mut dist_sq = 0.0;
    for d in 0..dim {
        let diff = embedding[head][d] - embedding[tail][d];
        dist_sq += diff * diff;
    }
    if dist_sq <= 0.0 {
        return;
    }
    let coeff = (-2.0 * CURVE_A * CURVE_B * dist_sq.powf(CURVE_B - 1.0))
        / (CURVE_A * dist_sq.powf(CURVE_B) + 1.0);
    for d in 0..dim {
        let diff = embedding[head][d] - embedding[tail][d];
        let grad = (coeff * diff).clamp(-GRAD_CLIP, GRAD_CLIP) * alpha;
        embedding[head][d] += grad;
        embedding[tail][d] -= grad;
    }
}

fn repel(embedding: &mut [Vec<f64>], head: usize, target: usize, dim: usize, alpha: f64) {
    let mut dist_sq = 0.0;
    for d in 0..dim {
        let diff = embedding[head][d] - embedding[target][d];
        dist_sq += diff * diff;
    }
    let coeff = (2.0 * CURVE_B) / ((0.001 + dist_sq) * (CURVE_A * dist_sq.powf(CURVE_B) + 1.0));
    for d in 0..dim {
        let grad = if dist_sq > 0.0 {
            let diff = embedding[head][d] - embedding[target][d];
            (coeff * diff).clamp(-GRAD_CLIP, GRAD_CLIP)
        } else {
            GRAD_CLIP
        } * alpha;
        embedding[head][d] += grad;
    }
}
