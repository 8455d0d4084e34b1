use nalgebra::DMatrix;
use pathfinding::prelude::{kuhn_munkres, Matrix};
use serde::{Deserialize, Serialize};

use crate::blockmodel::Membership;
use crate::error::{Error, Result};

/// Largest `K` for which permutations are enumerated exhaustively.
const EXHAUSTIVE_MAX_K: usize = 8;

/// Misclustering errors of an estimated membership against the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Overall relative error `L`.
    pub l: f64,
    /// Worst-case relative error `L̃`.
    pub l_tilde: f64,
    /// Optimal map from estimated to true labels for `L` (0-based).
    pub best_permutation: Vec<usize>,
    /// Misclustered nodes per true block under `best_permutation`.
    pub misclustered_per_block: Vec<usize>,
}

/// `L` and `L̃`, each minimized over its own label permutation. A wrong row
/// of `Θ̂Π` differs from `Θ` in two positions.
pub fn relative_errors(theta_hat: &Membership, theta: &Membership) -> Result<LossReport> {
    let n = theta.n();
    if theta_hat.n() != n {
        return Err(Error::arg(format!(
            "memberships cover {} and {n} nodes",
            theta_hat.n()
        )));
    }
    if n == 0 {
        return Err(Error::arg("memberships are empty"));
    }
    let k = theta.k().max(theta_hat.k());
    // agree[h][g] = #{i : ĝ_i = h, g_i = g}
    let mut agree = vec![vec![0usize; k]; k];
    for (&h, &g) in theta_hat.labels().iter().zip(theta.labels()) {
        agree[h][g] += 1;
    }
    let mut sizes = theta.sizes();
    sizes.resize(k, 0);

    let misses = |perm: &[usize]| -> Vec<usize> {
        let mut hit = vec![0usize; k];
        for (h, &g) in perm.iter().enumerate() {
            hit[g] = agree[h][g];
        }
        (0..k).map(|g| sizes[g] - hit[g]).collect()
    };
    let worst = |m: &[usize]| -> f64 {
        (0..k)
            .filter(|&g| sizes[g] > 0)
            .map(|g| 2.0 * m[g] as f64 / sizes[g] as f64)
            .fold(0.0, f64::max)
    };

    let (best_permutation, tilde_permutation) = if k <= EXHAUSTIVE_MAX_K {
        let mut best: Option<(usize, Vec<usize>)> = None;
        let mut best_tilde: Option<(f64, Vec<usize>)> = None;
        for_each_permutation(k, |perm| {
            let m = misses(perm);
            let total: usize = m.iter().sum();
            if best.as_ref().is_none_or(|b| total < b.0) {
                best = Some((total, perm.to_vec()));
            }
            let w = worst(&m);
            if best_tilde.as_ref().is_none_or(|b| w < b.0) {
                best_tilde = Some((w, perm.to_vec()));
            }
        });
        (best.expect("k >= 1").1, best_tilde.expect("k >= 1").1)
    } else {
        let weights = Matrix::from_vec(
            k,
            k,
            agree.iter().flatten().map(|&c| c as i64).collect(),
        )
        .expect("square weight matrix");
        let (_, perm) = kuhn_munkres(&weights);
        (perm, bottleneck_assignment(&agree, &sizes))
    };

    let m = misses(&best_permutation);
    let l = 2.0 * m.iter().sum::<usize>() as f64 / n as f64;
    let l_tilde = worst(&misses(&tilde_permutation));
    Ok(LossReport {
        l,
        l_tilde,
        best_permutation,
        misclustered_per_block: m,
    })
}

/// Calls `f` on every permutation of `0..k` (Heap's algorithm).
fn for_each_permutation(k: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut c = vec![0usize; k];
    f(&perm);
    let mut i = 0;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            f(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Permutation minimizing the largest per-block error rate: the smallest threshold
/// admitting a perfect matching on the allowed (estimated, true) label pairs.
fn bottleneck_assignment(agree: &[Vec<usize>], sizes: &[usize]) -> Vec<usize> {
    let k = sizes.len();
    let rate = |h: usize, g: usize| {
        if sizes[g] == 0 {
            0.0
        } else {
            (sizes[g] - agree[h][g]) as f64 / sizes[g] as f64
        }
    };
    let mut thresholds: Vec<f64> = (0..k)
        .flat_map(|h| (0..k).map(move |g| (h, g)))
        .map(|(h, g)| rate(h, g))
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let matching = |t: f64| {
        let allowed = Matrix::from_vec(
            k,
            k,
            (0..k)
                .flat_map(|h| (0..k).map(move |g| (h, g)))
                .map(|(h, g)| i64::from(rate(h, g) <= t))
                .collect(),
        )
        .expect("square weight matrix");
        let (size, perm) = kuhn_munkres(&allowed);
        (size == k as i64).then_some(perm)
    };
    let (mut lo, mut hi) = (0, thresholds.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if matching(thresholds[mid]).is_some() {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    matching(thresholds[lo]).expect("the largest threshold admits every pair")
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index from the pair-counting contingency table. Two labelings
/// that both put every node in one cluster, or both in singletons, score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::arg(format!(
            "labelings have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::arg("adjusted Rand index needs at least two nodes"));
    }
    let ka = a.iter().max().expect("nonempty") + 1;
    let kb = b.iter().max().expect("nonempty") + 1;
    let mut table = vec![0usize; ka * kb];
    let mut rows = vec![0usize; ka];
    let mut cols = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    let index: f64 = table.iter().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.iter().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.iter().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(a.len());
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Nodes whose fitted centroid row lies far from their aligned population row.
#[derive(Debug, Clone, PartialEq)]
pub struct MisclusteredSets {
    /// `S_k` per true block (node indices).
    pub sets: Vec<Vec<usize>>,
    /// `δ_k = √(1/n_k + 1/max_{ℓ≠k} n_ℓ)`.
    pub delta: Vec<f64>,
    /// `Σ_k |S_k| δ_k²`.
    pub lhs: f64,
    /// `8(2+ε)‖Û − UQ‖_F²`.
    pub rhs: f64,
    pub bound_holds: bool,
}

/// `S_k = {i ∈ G_k : ‖(Θ̂T̂)_i − (UQ)_i‖ ≥ δ_k/2}` and the k-means error bound
/// `Σ|S_k|δ_k² ≤ 8(2+ε)‖Û − UQ‖_F²`.
pub fn misclustered_sets(
    theta_hat: &Membership,
    centroids: &DMatrix<f64>,
    theta: &Membership,
    u_hat: &DMatrix<f64>,
    u_aligned: &DMatrix<f64>,
    epsilon_k: f64,
) -> Result<MisclusteredSets> {
    let n = theta.n();
    if theta_hat.n() != n || u_hat.nrows() != n || u_aligned.nrows() != n {
        return Err(Error::arg("memberships and embeddings must cover the same nodes"));
    }
    if u_hat.shape() != u_aligned.shape() || centroids.ncols() != u_hat.ncols() {
        return Err(Error::arg("embeddings and centroids must share a dimension"));
    }
    if centroids.nrows() < theta_hat.k() {
        return Err(Error::arg("fewer centroids than estimated blocks"));
    }
    theta.require_nonempty()?;
    let sizes = theta.sizes();
    let delta: Vec<f64> = (0..theta.k())
        .map(|k| {
            let other = (0..theta.k())
                .filter(|&l| l != k)
                .map(|l| sizes[l])
                .max()
                .map_or(0.0, |m| 1.0 / m as f64);
            (1.0 / sizes[k] as f64 + other).sqrt()
        })
        .collect();
    let mut sets = vec![Vec::new(); theta.k()];
    for i in 0..n {
        let g = theta.label(i);
        let fitted = centroids.row(theta_hat.label(i));
        if (fitted - u_aligned.row(i)).norm() >= delta[g] / 2.0 {
            sets[g].push(i);
        }
    }
    let lhs = sets
        .iter()
        .zip(&delta)
        .map(|(s, d)| s.len() as f64 * d * d)
        .sum();
    let rhs = 8.0 * (2.0 + epsilon_k) * (u_hat - u_aligned).norm_squared();
    Ok(MisclusteredSets {
        sets,
        delta,
        lhs,
        rhs,
        bound_holds: lhs <= rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(labels: &[usize], k: usize) -> Membership {
        Membership::new(labels.to_vec(), k).unwrap()
    }

    #[test]
    fn one_mislabeled_node() {
        let truth = m(&[0, 0, 1, 1], 2);
        let r = relative_errors(&m(&[1, 0, 1, 1], 2), &truth).unwrap();
        assert_eq!(r.l, 0.5);
        assert_eq!(r.l_tilde, 1.0);
        assert_eq!(r.misclustered_per_block, vec![1, 0]);
        let same = relative_errors(&m(&[1, 1, 0, 0], 2), &truth).unwrap();
        assert_eq!((same.l, same.l_tilde), (0.0, 0.0));
        assert_eq!(same.best_permutation, vec![1, 0]);
        assert!(relative_errors(&m(&[0, 0, 1], 2), &truth).is_err());
    }

    #[test]
    fn l_and_l_tilde_use_own_permutations() {
        // block sizes 2 and 6; both blocks lose nodes under either labeling
        let truth = m(&[0, 0, 1, 1, 1, 1, 1, 1], 2);
        let hat = m(&[0, 1, 0, 0, 0, 1, 1, 1], 2);
        let r = relative_errors(&hat, &truth).unwrap();
        // identity: 1 + 3 misses, swapped: 1 + 3 misses
        assert_abs_diff_eq!(r.l, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.l_tilde, 1.0, epsilon = 1e-15);
        assert!(r.l <= r.l_tilde);
    }

    #[test]
    fn padding_and_large_k() {
        let truth = m(&[0, 0, 1, 1, 2, 2], 3);
        let hat = m(&[1, 1, 0, 0, 0, 0], 2);
        let r = relative_errors(&hat, &truth).unwrap();
        assert_abs_diff_eq!(r.l, 4.0 / 6.0, epsilon = 1e-15);
        assert_eq!(r.l_tilde, 2.0);

        // K = 10 goes through the assignment solver
        let labels: Vec<usize> = (0..50).map(|i| i % 10).collect();
        let truth = m(&labels, 10);
        let shifted: Vec<usize> = labels.iter().map(|&g| (g + 3) % 10).collect();
        let mut noisy = shifted.clone();
        noisy[0] = (noisy[0] + 1) % 10;
        let r = relative_errors(&m(&noisy, 10), &truth).unwrap();
        assert_abs_diff_eq!(r.l, 2.0 / 50.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.l_tilde, 2.0 / 5.0, epsilon = 1e-15);
        let exact = relative_errors(&m(&shifted, 10), &truth).unwrap();
        assert_eq!((exact.l, exact.l_tilde), (0.0, 0.0));
    }

    #[test]
    fn permutation_enumeration() {
        let mut seen = std::collections::BTreeSet::new();
        for_each_permutation(4, |p| {
            seen.insert(p.to_vec());
        });
        assert_eq!(seen.len(), 24);
    }

    /// ARI by enumerating all node pairs.
    fn ari_oracle(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut total) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                both += f64::from(u8::from(sa && sb));
                only_a += f64::from(u8::from(sa));
                only_b += f64::from(u8::from(sb));
                total += 1.0;
            }
        }
        let expected = only_a * only_b / total;
        (both - expected) / (0.5 * (only_a + only_b) - expected)
    }

    #[test]
    fn ari_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
        let (a, b) = ([0, 0, 1, 1], [0, 1, 0, 1]);
        assert_abs_diff_eq!(adjusted_rand_index(&a, &b).unwrap(), ari_oracle(&a, &b), epsilon = 1e-15);
        assert_abs_diff_eq!(adjusted_rand_index(&a, &b).unwrap(), -0.5, epsilon = 1e-15);
        let (a, b) = ([0, 0, 0, 1, 1, 2, 2, 2], [1, 1, 0, 0, 2, 2, 2, 0]);
        assert_abs_diff_eq!(adjusted_rand_index(&a, &b).unwrap(), ari_oracle(&a, &b), epsilon = 1e-14);
        assert!(adjusted_rand_index(&[0], &[0]).is_err());
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn misclustered_threshold() {
        let theta = m(&[0, 0, 1, 1, 1], 2);
        let u = DMatrix::from_fn(5, 2, |i, j| {
            let g = theta.label(i);
            if j == g {
                1.0 / [2.0f64, 3.0][g].sqrt()
            } else {
                0.0
            }
        });
        let centroids = DMatrix::from_row_slice(2, 2, &[1.0 / 2f64.sqrt(), 0.0, 0.0, 1.0 / 3f64.sqrt()]);
        let exact = misclustered_sets(&theta, &centroids, &theta, &u, &u, 0.1).unwrap();
        assert!(exact.sets.iter().all(Vec::is_empty));
        assert!(exact.bound_holds);
        assert_abs_diff_eq!(exact.delta[0], (0.5f64 + 1.0 / 3.0).sqrt(), epsilon = 1e-15);

        let small = &centroids * 1.0 + DMatrix::from_element(2, 2, 0.05);
        let r = misclustered_sets(&theta, &small, &theta, &u, &u, 0.1).unwrap();
        assert!(r.sets.iter().all(Vec::is_empty));

        // swapping estimated labels of node 0 moves it to the wrong centroid
        let hat = m(&[1, 0, 1, 1, 1], 2);
        let r = misclustered_sets(&hat, &centroids, &theta, &u, &u, 0.1).unwrap();
        assert_eq!(r.sets, vec![vec![0], vec![]]);
        assert!(!r.bound_holds);
    }
}
