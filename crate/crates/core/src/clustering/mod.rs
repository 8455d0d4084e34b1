//! Spectral clustering: approximate k-means on embedding rows, embedding
//! dimension selection, and misclustering metrics.

mod metrics;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockmodel::Membership;
use crate::error::{Error, Result};
use crate::linalg::{eigs_topk, symmetric_eigen, Embedding, SymMatrix};
use crate::ranks::{pass_to_ranks, TieMode};
use crate::rng::SeedStream;
use crate::tolerances;

pub use metrics::{
    adjusted_rand_index, misclustered_sets, relative_errors, LossReport, MisclusteredSets,
};

/// Output of k-means on the rows of an embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub membership_hat: Membership,
    /// `K × d` centroids `T̂`.
    pub centroids: DMatrix<f64>,
    /// `‖Û − Θ̂T̂‖_F²`.
    pub cost: f64,
    pub epsilon_k: f64,
    pub selected_d: usize,
    /// Eigenvalues of the embedding that was clustered (empty for raw k-means).
    pub eigenvalues: Vec<f64>,
    /// The clustered embedding, when produced by [`spectral_cluster`].
    pub embedding: Option<Embedding>,
}

fn squared_distance(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|j| (points[(i, j)] - centroids[(c, j)]).powi(2))
        .sum()
}

/// Nearest centroid (lowest index on ties) and its squared distance.
fn nearest(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.nrows() {
        let d = squared_distance(points, i, centroids, c);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Distance-weighted seeding: each new center is drawn with probability proportional
/// to the squared distance to the nearest existing one.
fn seed_centroids(points: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let (n, d) = points.shape();
    let mut centroids = DMatrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from(&points.row(first));
    let mut dist: Vec<f64> = (0..n)
        .map(|i| squared_distance(points, i, &centroids, 0))
        .collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // guard against landing on a zero-weight point through rounding
            if dist[chosen] == 0.0 {
                chosen = dist
                    .iter()
                    .rposition(|&w| w > 0.0)
                    .expect("positive total weight");
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from(&points.row(pick));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(squared_distance(points, i, &centroids, c));
        }
    }
    centroids
}

struct LloydFit {
    labels: Vec<usize>,
    centroids: DMatrix<f64>,
    cost: f64,
}

fn update_centroids(points: &DMatrix<f64>, labels: &[usize], k: usize) -> (DMatrix<f64>, Vec<usize>) {
    let d = points.ncols();
    let mut sums = DMatrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for j in 0..d {
            sums[(c, j)] += points[(i, j)];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            sums.row_mut(c).scale_mut(inv);
        }
    }
    (sums, counts)
}

fn lloyd(points: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> LloydFit {
    let n = points.nrows();
    let mut centroids = seed_centroids(points, k, rng);
    let mut labels = vec![0usize; n];
    let mut previous = f64::INFINITY;
    for _ in 0..tolerances::KMEANS_MAX_ITERATIONS {
        let mut cost = 0.0;
        let mut distances = vec![0.0; n];
        for i in 0..n {
            let (c, dist) = nearest(points, i, &centroids);
            labels[i] = c;
            distances[i] = dist;
            cost += dist;
        }
        let (mut next, counts) = update_centroids(points, &labels, k);
        // An empty cluster takes over the point farthest from its centroid.
        for c in (0..k).filter(|&c| counts[c] == 0) {
            let far = (0..n)
                .max_by(|&a, &b| distances[a].total_cmp(&distances[b]).then(b.cmp(&a)))
                .expect("n >= 1");
            next.row_mut(c).copy_from(&points.row(far));
            distances[far] = 0.0;
        }
        centroids = next;
        let converged = previous.is_finite()
            && (previous - cost).abs() <= tolerances::KMEANS_RELATIVE_COST_CHANGE * previous.max(f64::MIN_POSITIVE);
        previous = cost;
        if converged {
            break;
        }
    }
    for (i, label) in labels.iter_mut().enumerate() {
        *label = nearest(points, i, &centroids).0;
    }
    let centroids = hartigan_refine(points, &mut labels, k);
    let cost = (0..n)
        .map(|i| squared_distance(points, i, &centroids, labels[i]))
        .sum();
    LloydFit {
        labels,
        centroids,
        cost,
    }
}

/// Single-point moves that lower the exact k-means cost, until none remains. Moving
/// `x` from `a` to `b` changes the cost by `n_b/(n_b+1)·‖x−μ_b‖² − n_a/(n_a−1)·‖x−μ_a‖²`.
/// Returns the cluster means of the final labels.
fn hartigan_refine(points: &DMatrix<f64>, labels: &mut [usize], k: usize) -> DMatrix<f64> {
    let n = points.nrows();
    let (mut means, mut counts) = update_centroids(points, labels, k);
    for _ in 0..tolerances::KMEANS_MAX_ITERATIONS {
        let mut moved = false;
        for i in 0..n {
            let a = labels[i];
            if counts[a] <= 1 {
                continue;
            }
            let na = counts[a] as f64;
            let removal = na / (na - 1.0) * squared_distance(points, i, &means, a);
            let mut best = (a, 0.0);
            for b in (0..k).filter(|&b| b != a) {
                let nb = counts[b] as f64;
                let delta = nb / (nb + 1.0) * squared_distance(points, i, &means, b) - removal;
                if delta < best.1 - tolerances::KMEANS_RELATIVE_COST_CHANGE * removal {
                    best = (b, delta);
                }
            }
            let b = best.0;
            if b == a {
                continue;
            }
            let x = points.row(i);
            let nb = counts[b] as f64;
            let new_a = (means.row(a) * na - x) / (na - 1.0);
            let new_b = (means.row(b) * nb + x) / (nb + 1.0);
            means.row_mut(a).copy_from(&new_a);
            means.row_mut(b).copy_from(&new_b);
            counts[a] -= 1;
            counts[b] += 1;
            labels[i] = b;
            moved = true;
        }
        if !moved {
            break;
        }
    }
    // Recompute from scratch to shed drift from the incremental updates.
    update_centroids(points, labels, k).0
}

/// Relabels clusters in order of first appearance and permutes centroid rows to match.
fn canonicalize(fit: LloydFit, k: usize) -> (Vec<usize>, DMatrix<f64>) {
    let mut map = vec![usize::MAX; k];
    let mut next = 0;
    for &c in &fit.labels {
        if map[c] == usize::MAX {
            map[c] = next;
            next += 1;
        }
    }
    for slot in map.iter_mut().filter(|m| **m == usize::MAX) {
        *slot = next;
        next += 1;
    }
    let labels = fit.labels.iter().map(|&c| map[c]).collect();
    let mut centroids = DMatrix::zeros(k, fit.centroids.ncols());
    for c in 0..k {
        centroids.row_mut(map[c]).copy_from(&fit.centroids.row(c));
    }
    (labels, centroids)
}

/// Best of `restarts` seeded Lloyd runs on the rows of `points`.
pub fn approx_kmeans(
    points: &DMatrix<f64>,
    k: usize,
    epsilon_k: f64,
    seed: SeedStream,
    restarts: usize,
) -> Result<ClusterResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::arg(format!(
            "k-means needs 1 <= K <= n, got K = {k}, n = {n}"
        )));
    }
    if restarts == 0 {
        return Err(Error::arg("restarts must be at least 1"));
    }
    if !(epsilon_k > 0.0) {
        return Err(Error::arg(format!("epsilon_k must be positive, got {epsilon_k}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("points contain non-finite values"));
    }
    let fits: Vec<LloydFit> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(points, k, &mut seed.substream(r as u64).rng()))
        .collect();
    // Lowest restart index wins ties.
    let best = fits
        .into_iter()
        .reduce(|a, b| if b.cost < a.cost { b } else { a })
        .expect("restarts >= 1");
    let cost = best.cost;
    let (labels, centroids) = canonicalize(best, k);
    Ok(ClusterResult {
        membership_hat: Membership::new(labels, k)?,
        centroids,
        cost,
        epsilon_k,
        selected_d: points.ncols(),
        eigenvalues: Vec::new(),
        embedding: None,
    })
}

/// Rule for choosing the embedding dimension from a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DimensionRule {
    /// Count of `|λ| > 4·n^{3/4 + eps_p}`.
    Lemma { eps_p: f64 },
    /// Count of `|λ| > 1.001·√n`.
    Practical,
    /// Two-group profile likelihood split over the leading `max_d` magnitudes,
    /// with the largest one left out.
    ProfileLikelihood { max_d: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DimensionMode {
    Fixed(usize),
    Auto(DimensionRule),
}

impl Default for DimensionMode {
    fn default() -> Self {
        DimensionMode::Auto(DimensionRule::Practical)
    }
}

/// Embedding dimension chosen by `rule` from eigenvalues sorted by decreasing magnitude.
pub fn select_dimension(eigenvalues: &[f64], n: usize, rule: DimensionRule) -> Result<usize> {
    if eigenvalues.is_empty() {
        return Err(Error::arg("cannot select a dimension from an empty spectrum"));
    }
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("spectrum contains non-finite values"));
    }
    if eigenvalues.windows(2).any(|w| w[0].abs() < w[1].abs()) {
        return Err(Error::arg("eigenvalues must be sorted by decreasing magnitude"));
    }
    let n = n as f64;
    let count_above = |t: f64| eigenvalues.iter().filter(|v| v.abs() > t).count();
    match rule {
        DimensionRule::Lemma { eps_p } => {
            if !(eps_p > 0.0 && eps_p < 0.25) {
                return Err(Error::arg(format!("eps_p must lie in (0, 1/4), got {eps_p}")));
            }
            Ok(count_above(4.0 * n.powf(0.75 + eps_p)))
        }
        DimensionRule::Practical => Ok(count_above(1.001 * n.sqrt())),
        DimensionRule::ProfileLikelihood { max_d } => {
            if max_d == 0 {
                return Err(Error::arg("max_d must be positive"));
            }
            if eigenvalues.iter().all(|&v| v == 0.0) {
                return Ok(0);
            }
            let top: Vec<f64> = eigenvalues.iter().take(max_d).map(|v| v.abs()).collect();
            Ok(profile_split(&top[1..]) + 1)
        }
    }
}

/// Size `q` of the leading group maximizing the two-normal profile log-likelihood with a
/// common variance. Both groups must be nonempty; fewer than two values give 0.
fn profile_split(x: &[f64]) -> usize {
    let m = x.len();
    if m < 2 {
        return 0;
    }
    let sse = |s: &[f64]| {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    };
    // The maximized log-likelihood is −(m/2)(ln(2πσ̂²) + 1), decreasing in σ̂².
    let mut best = (1, f64::INFINITY);
    for q in 1..m {
        let pooled = (sse(&x[..q]) + sse(&x[q..])) / m as f64;
        if pooled < best.1 {
            best = (q, pooled);
        }
    }
    best.0
}

/// Spectral clustering of a symmetric matrix, optionally after pass-to-ranks.
/// An automatic dimension of zero is raised to one so that k-means has coordinates.
pub fn spectral_cluster(
    a: &SymMatrix,
    k: usize,
    mode: DimensionMode,
    ptr: Option<TieMode>,
    epsilon_k: f64,
    restarts: usize,
    seed: SeedStream,
) -> Result<ClusterResult> {
    let ranked;
    let m = match ptr {
        Some(tie_mode) => {
            ranked = pass_to_ranks(a, tie_mode)?;
            ranked.matrix()
        }
        None => a,
    };
    let embedding = match mode {
        DimensionMode::Fixed(d) => eigs_topk(m, d)?,
        DimensionMode::Auto(rule) => {
            let full = symmetric_eigen(m)?;
            let d = select_dimension(&full.eigenvalues, m.n(), rule)?.max(1);
            full.truncate(d)?
        }
    };
    let mut result = approx_kmeans(&embedding.vectors, k, epsilon_k, seed, restarts)?;
    result.selected_d = embedding.d();
    result.eigenvalues = embedding.eigenvalues.clone();
    result.embedding = Some(embedding);
    Ok(result)
}
