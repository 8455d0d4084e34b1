//! Exact finite-`N` moments of normalized ranks for independent entries drawn
//! from several distributions, and the block-pair matrices `B̃`, `S̃²` built from them.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{block_pairs, pair_count, pair_index, BlockModelSpec};
use crate::distributions::{cross_cdf_moment, cross_cdf_product_moment, g_moment, Distribution};
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, SymMatrix};

/// Whether two distinct matrix entries share a node. The covariance does not depend on
/// it (distinct entries are independent), but feasibility under the block sizes does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairSharing {
    /// Entries `(i, j)` and `(i, j′)` with `j ≠ j′`.
    SharedNode,
    /// Entries on four distinct nodes.
    Disjoint,
}

/// Moment calculator for the normalized ranks of `N = Σ_ℓ N_ℓ` independent variables,
/// `N_ℓ` of which follow `F_ℓ`.
///
/// For a blockmodel the groups `ℓ` are the unordered block pairs with
/// `N_(k,k) = n_k(n_k−1)/2` and `N_(k,l) = n_k·n_l`.
#[derive(Debug)]
pub struct RankMomentEngine {
    dists: Vec<Distribution>,
    counts: Vec<u64>,
    total: f64,
    // first[l * L + m] = E_l[F_m(X)]
    first: Vec<f64>,
    // product[(l * L + a) * L + b] = E_l[F_a(X) F_b(X)]
    product: OnceLock<Result<Vec<f64>, String>>,
    g: Mutex<HashMap<(usize, usize, usize), f64>>,
}

impl RankMomentEngine {
    pub fn from_counts(dists: Vec<Distribution>, counts: Vec<u64>) -> Result<Self> {
        if dists.is_empty() || dists.len() != counts.len() {
            return Err(Error::arg(format!(
                "need one count per distribution, got {} distributions and {} counts",
                dists.len(),
                counts.len()
            )));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::arg("at least one variable is required"));
        }
        let groups = dists.len();
        let pairs: Vec<(usize, usize)> = (0..groups)
            .flat_map(|l| ((l + 1)..groups).map(move |m| (l, m)))
            .collect();
        let values = pairs
            .par_iter()
            .map(|&(l, m)| cross_cdf_moment(&dists[l], &dists[m]))
            .collect::<Result<Vec<_>>>()?;
        let mut first = vec![0.5; groups * groups];
        for (&(l, m), v) in pairs.iter().zip(values) {
            first[l * groups + m] = v;
            first[m * groups + l] = 1.0 - v;
        }
        Ok(RankMomentEngine {
            dists,
            counts,
            total: total as f64,
            first,
            product: OnceLock::new(),
            g: Mutex::new(HashMap::new()),
        })
    }

    /// Groups are the unordered block pairs of `spec`, in `pair_index` order.
    pub fn for_spec(spec: &BlockModelSpec) -> Result<Self> {
        let sizes = spec.membership().sizes();
        let counts = block_pairs(spec.k())
            .into_iter()
            .map(|(a, b)| {
                let (na, nb) = (sizes[a] as u64, sizes[b] as u64);
                if a == b {
                    na * na.saturating_sub(1) / 2
                } else {
                    na * nb
                }
            })
            .collect();
        RankMomentEngine::from_counts(spec.dists().to_vec(), counts)
    }

    pub fn groups(&self) -> usize {
        self.dists.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `N`.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `E_l[F_m(X)]`.
    pub fn first_moment(&self, l: usize, m: usize) -> f64 {
        self.first[l * self.groups() + m]
    }

    fn products(&self) -> Result<&[f64]> {
        let l = self.groups();
        let table = self.product.get_or_init(|| {
            let triples: Vec<(usize, usize, usize)> = (0..l)
                .flat_map(|o| (0..l).flat_map(move |a| (a..l).map(move |b| (o, a, b))))
                .collect();
            let values = triples
                .par_iter()
                .map(|&(o, a, b)| {
                    cross_cdf_product_moment(&self.dists[o], &self.dists[a], &self.dists[b])
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.to_string())?;
            let mut table = vec![0.0; l * l * l];
            for (&(o, a, b), v) in triples.iter().zip(values) {
                table[(o * l + a) * l + b] = v;
                table[(o * l + b) * l + a] = v;
            }
            Ok(table)
        });
        table
            .as_deref()
            .map_err(|msg| Error::Numerical(msg.clone()))
    }

    /// `E_l[F_a(X) F_b(X)]`.
    pub fn product_moment(&self, l: usize, a: usize, b: usize) -> Result<f64> {
        let g = self.groups();
        Ok(self.products()?[(l * g + a) * g + b])
    }

    /// `E_outer[g_(m, inner)(X)]`.
    pub fn g_moment(&self, m: usize, inner: usize, outer: usize) -> Result<f64> {
        let key = (m, inner, outer);
        if let Some(&v) = self.g.lock().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let v = g_moment(&self.dists[m], &self.dists[inner], &self.dists[outer])?;
        self.g.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    fn require(&self, l: usize, at_least: u64) -> Result<()> {
        if l >= self.groups() {
            return Err(Error::arg(format!(
                "group {l} out of range (there are {})",
                self.groups()
            )));
        }
        if self.counts[l] < at_least {
            return Err(Error::arg(format!(
                "group {l} has {} variables, at least {at_least} needed",
                self.counts[l]
            )));
        }
        Ok(())
    }

    fn weighted_first(&self, l: usize) -> f64 {
        (0..self.groups())
            .map(|m| self.counts[m] as f64 * self.first_moment(l, m))
            .sum()
    }

    /// `E[R̃_i]` for `X_i ~ F_l`.
    pub fn expectation(&self, l: usize) -> Result<f64> {
        self.require(l, 1)?;
        // (N/(N+1))·(Σ_m (N_m/N)·E_l[F_m] + 1/(2N))
        Ok((self.weighted_first(l) + 0.5) / (self.total + 1.0))
    }

    /// `Var[R̃_i]` for `X_i ~ F_l`.
    pub fn variance(&self, l: usize) -> Result<f64> {
        self.require(l, 1)?;
        let groups = self.groups();
        let n = self.total;
        let mut quadratic = 0.0;
        let mut correction = 0.0;
        for a in 0..groups {
            let ca = self.counts[a] as f64;
            if ca == 0.0 {
                continue;
            }
            for b in 0..groups {
                let cb = self.counts[b] as f64;
                if cb != 0.0 {
                    quadratic += ca * cb * self.product_moment(l, a, b)?;
                }
            }
            correction += ca
                * (2.0 * self.first_moment(l, a)
                    - 2.0 * self.product_moment(l, l, a)?
                    - self.product_moment(l, a, a)?);
        }
        let linear = self.weighted_first(l);
        // N²·Var[R̃′] rescaled by (N/(N+1))².
        let v = quadratic - linear * linear + correction - 1.0 / 12.0;
        Ok(v / (n + 1.0).powi(2))
    }

    /// `Cov[R̃_i, R̃_j]` for distinct `i ≠ j` with `X_i ~ F_l`, `X_j ~ F_lp`.
    pub fn covariance(&self, l: usize, lp: usize) -> Result<f64> {
        self.require(l, 1)?;
        self.require(lp, if l == lp { 2 } else { 1 })?;
        let e = |a: usize, b: usize| self.first_moment(a, b);
        let mut leading = 0.0;
        for m in 0..self.groups() {
            let cm = self.counts[m] as f64;
            if cm == 0.0 {
                continue;
            }
            let survival_product =
                1.0 - e(m, l) - e(m, lp) + self.product_moment(m, l, lp)?;
            let term = survival_product + self.g_moment(m, lp, l)? + self.g_moment(m, l, lp)?
                - e(l, m) * e(lp, m)
                - e(l, m) * e(lp, l)
                - e(l, lp) * e(lp, m);
            leading += cm * term;
        }
        let first = 2.0 * e(l, lp)
            - self.product_moment(l, l, lp)?
            - self.g_moment(l, lp, l)?
            - self.g_moment(lp, lp, l)?
            - 1.0 / 3.0;
        let second = 2.0 * e(lp, l)
            - self.product_moment(lp, l, lp)?
            - self.g_moment(l, l, lp)?
            - self.g_moment(lp, l, lp)?
            - 1.0 / 3.0;
        let third = e(l, lp) * e(lp, l) - 0.25;
        // N²·Cov[R̃′] rescaled by (N/(N+1))².
        let c = leading + first + second + third - 1.0 / 12.0;
        Ok(c / (self.total + 1.0).powi(2))
    }

    /// Two-sided bound on any rank covariance at this `N`.
    pub fn covariance_bounds(&self) -> (f64, f64) {
        let n = self.total;
        let scale = (n / (n + 1.0)).powi(2);
        ((-3.0 / n - 5.0 / (n * n)) * scale, (3.0 / n + 4.0 / (n * n)) * scale)
    }

    /// `K × K` matrix of expected normalized ranks, for an engine built by [`Self::for_spec`].
    pub fn b_tilde(&self, k: usize) -> Result<DMatrix<f64>> {
        self.block_table(k, |l| self.expectation(l))
    }

    /// `K × K` matrix of normalized-rank variances, for an engine built by [`Self::for_spec`].
    pub fn s2_tilde(&self, k: usize) -> Result<DMatrix<f64>> {
        self.block_table(k, |l| self.variance(l))
    }

    fn block_table(&self, k: usize, f: impl Fn(usize) -> Result<f64>) -> Result<DMatrix<f64>> {
        if pair_count(k) != self.groups() {
            return Err(Error::arg(format!(
                "engine has {} groups, which is not K(K+1)/2 for K = {k}",
                self.groups()
            )));
        }
        let mut out = DMatrix::zeros(k, k);
        for (a, b) in block_pairs(k) {
            let v = f(pair_index(k, a, b))?;
            out[(a, b)] = v;
            out[(b, a)] = v;
        }
        Ok(out)
    }
}

fn check_blocks(spec: &BlockModelSpec, k: usize, kp: usize) -> Result<usize> {
    let nk = spec.k();
    if k >= nk || kp >= nk {
        return Err(Error::arg(format!(
            "block pair ({}, {}) out of range for K = {nk}",
            k + 1,
            kp + 1
        )));
    }
    Ok(pair_index(nk, k, kp))
}

/// `B̃_(k,k′)` at the model's block sizes (0-based blocks).
pub fn population_expected_rank_entry(spec: &BlockModelSpec, k: usize, kp: usize) -> Result<f64> {
    let l = check_blocks(spec, k, kp)?;
    RankMomentEngine::for_spec(spec)?.expectation(l)
}

/// `S̃²_(k,k′)` at the model's block sizes (0-based blocks).
pub fn population_rank_variance_entry(spec: &BlockModelSpec, k: usize, kp: usize) -> Result<f64> {
    let l = check_blocks(spec, k, kp)?;
    RankMomentEngine::for_spec(spec)?.variance(l)
}

/// Covariance of the normalized ranks of two distinct entries lying in block pairs
/// `first` and `second` (0-based). Errors when the block sizes cannot host the
/// requested configuration.
pub fn population_rank_covariance(
    spec: &BlockModelSpec,
    first: (usize, usize),
    second: (usize, usize),
    sharing: PairSharing,
) -> Result<f64> {
    let l = check_blocks(spec, first.0, first.1)?;
    let lp = check_blocks(spec, second.0, second.1)?;
    check_configuration(spec, first, second, sharing)?;
    RankMomentEngine::for_spec(spec)?.covariance(l, lp)
}

fn check_configuration(
    spec: &BlockModelSpec,
    first: (usize, usize),
    second: (usize, usize),
    sharing: PairSharing,
) -> Result<()> {
    let sizes = spec.membership().sizes();
    let fits = |nodes: &[usize]| {
        let mut need = vec![0usize; sizes.len()];
        for &b in nodes {
            need[b] += 1;
        }
        need.iter().zip(&sizes).all(|(n, s)| n <= s)
    };
    let feasible = match sharing {
        PairSharing::Disjoint => fits(&[first.0, first.1, second.0, second.1]),
        PairSharing::SharedNode => {
            let (a, b) = first;
            let (c, d) = second;
            // Try every choice of the shared endpoint.
            [(a, b, c, d), (a, b, d, c), (b, a, c, d), (b, a, d, c)]
                .iter()
                .any(|&(s1, o1, s2, o2)| s1 == s2 && fits(&[s1, o1, o2]))
        }
    };
    if feasible {
        Ok(())
    } else {
        Err(Error::arg(format!(
            "block sizes {sizes:?} cannot host entries in blocks ({}, {}) and ({}, {}) with {sharing:?}",
            first.0 + 1,
            first.1 + 1,
            second.0 + 1,
            second.1 + 1
        )))
    }
}

/// Block-wise population parameters of the raw and rank-transformed data.
/// `mean`/`variance` entries are `None` where the moment does not exist.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMatrices {
    pub median: DMatrix<f64>,
    pub mean: DMatrix<Option<f64>>,
    pub variance: DMatrix<Option<f64>>,
    pub b_tilde: DMatrix<f64>,
    pub s2_tilde: DMatrix<f64>,
    /// Eigenvalues of `B̃`, ordered by decreasing magnitude.
    pub b_tilde_eigenvalues: Vec<f64>,
}

pub fn population_matrices(spec: &BlockModelSpec) -> Result<PopulationMatrices> {
    let k = spec.k();
    let engine = RankMomentEngine::for_spec(spec)?;
    let b_tilde = engine.b_tilde(k)?;
    let s2_tilde = engine.s2_tilde(k)?;
    let b_tilde_eigenvalues = symmetric_eigen(&SymMatrix::from_upper_fn(k, |a, b| b_tilde[(a, b)]))?
        .eigenvalues;
    Ok(PopulationMatrices {
        median: DMatrix::from_fn(k, k, |a, b| spec.dist(a, b).median()),
        mean: DMatrix::from_fn(k, k, |a, b| spec.dist(a, b).mean()),
        variance: DMatrix::from_fn(k, k, |a, b| spec.dist(a, b).variance()),
        b_tilde,
        s2_tilde,
        b_tilde_eigenvalues,
    })
}

/// `E[R̃_A] = ΘB̃Θᵀ − diag(ΘB̃Θᵀ)`.
pub fn expected_rank_matrix(spec: &BlockModelSpec) -> Result<SymMatrix> {
    let b_tilde = RankMomentEngine::for_spec(spec)?.b_tilde(spec.k())?;
    let g = spec.membership().labels();
    Ok(SymMatrix::from_upper_fn(spec.n(), |i, j| {
        if i == j {
            0.0
        } else {
            b_tilde[(g[i], g[j])]
        }
    }))
}
