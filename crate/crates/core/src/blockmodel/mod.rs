//! Weighted blockmodels: membership, model specification, sampling, and the
//! population matrices of the raw and rank-transformed data.

mod moments;
mod population;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution as _, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::distributions::{Distribution, Sampler};
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::rng::SeedStream;

pub use moments::{
    expected_rank_matrix, population_expected_rank_entry, population_matrices,
    population_rank_covariance, population_rank_variance_entry, PairSharing, PopulationMatrices,
    RankMomentEngine,
};
pub use population::{block_matrix_eigen, block_subspace, population_eigvecs, PopulationEigen};

/// Block assignment of `n` nodes to `K` blocks, stored with 0-based labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Membership {
    labels: Vec<usize>,
    k: usize,
}

impl Membership {
    /// Labels must lie in `0..k`. Empty blocks are allowed here and rejected where they matter.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("number of blocks must be positive"));
        }
        if let Some((i, &g)) = labels.iter().enumerate().find(|(_, &g)| g >= k) {
            return Err(Error::arg(format!(
                "node {i} has block label {g}, outside 0..{k}"
            )));
        }
        Ok(Membership { labels, k })
    }

    /// Builds from 1-based labels in `1..=k`.
    pub fn from_one_based(labels: &[usize], k: usize) -> Result<Self> {
        let zero_based = labels
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                if g == 0 {
                    Err(Error::arg(format!("node {i} has block label 0; labels are 1-based")))
                } else {
                    Ok(g - 1)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Membership::new(zero_based, k)
    }

    /// Contiguous blocks: the first `sizes[0]` nodes in block 0, and so on.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let labels = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect();
        Membership::new(labels, sizes.len())
    }

    /// `n` nodes in `k` contiguous blocks whose sizes differ by at most one.
    pub fn balanced(n: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::arg("number of blocks must be positive"));
        }
        let sizes: Vec<usize> = (0..k).map(|b| n / k + usize::from(b < n % k)).collect();
        Membership::from_sizes(&sizes)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn one_based_labels(&self) -> Vec<usize> {
        self.labels.iter().map(|g| g + 1).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &g in &self.labels {
            sizes[g] += 1;
        }
        sizes
    }

    /// Node indices of each block, in increasing order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut blocks = vec![Vec::new(); self.k];
        for (i, &g) in self.labels.iter().enumerate() {
            blocks[g].push(i);
        }
        blocks
    }

    /// The `n × K` one-hot membership matrix Θ.
    pub fn theta(&self) -> DMatrix<f64> {
        let mut theta = DMatrix::zeros(self.n(), self.k);
        for (i, &g) in self.labels.iter().enumerate() {
            theta[(i, g)] = 1.0;
        }
        theta
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        match self.sizes().iter().position(|&s| s == 0) {
            Some(k) => Err(Error::Model(format!("block {} is empty", k + 1))),
            None => Ok(()),
        }
    }

    fn contiguous_sizes(&self) -> Option<Vec<usize>> {
        self.labels
            .windows(2)
            .all(|w| w[0] <= w[1])
            .then(|| self.sizes())
    }
}

/// Number of unordered block pairs `K(K+1)/2`.
pub fn pair_count(k: usize) -> usize {
    k * (k + 1) / 2
}

/// Index of the unordered pair `{a, b}` (0-based blocks) in row-major upper-triangular order.
pub fn pair_index(k: usize, a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    debug_assert!(b < k);
    a * k - a * a.saturating_sub(1) / 2 + (b - a)
}

/// The unordered block pairs `(a, b)`, `a ≤ b`, in [`pair_index`] order.
pub fn block_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|a| (a..k).map(move |b| (a, b))).collect()
}

/// Weighted blockmodel: a membership and one distribution per unordered block pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecFile", into = "SpecFile")]
pub struct BlockModelSpec {
    membership: Membership,
    dists: Vec<Distribution>,
    hollow: bool,
}

impl BlockModelSpec {
    /// `dists` is indexed by [`pair_index`] and must hold exactly `K(K+1)/2` entries.
    pub fn new(membership: Membership, dists: Vec<Distribution>, hollow: bool) -> Result<Self> {
        let expected = pair_count(membership.k());
        if dists.len() != expected {
            return Err(Error::arg(format!(
                "{} blocks need {expected} distributions, got {}",
                membership.k(),
                dists.len()
            )));
        }
        Ok(BlockModelSpec {
            membership,
            dists,
            hollow,
        })
    }

    /// Builds from a closure giving the distribution of each unordered pair `(a, b)`, `a ≤ b`.
    pub fn from_fn(
        membership: Membership,
        hollow: bool,
        mut f: impl FnMut(usize, usize) -> Result<Distribution>,
    ) -> Result<Self> {
        let dists = block_pairs(membership.k())
            .into_iter()
            .map(|(a, b)| f(a, b))
            .collect::<Result<Vec<_>>>()?;
        BlockModelSpec::new(membership, dists, hollow)
    }

    pub fn membership(&self) -> &Membership {
        &self.membership
    }

    pub fn k(&self) -> usize {
        self.membership.k()
    }

    pub fn n(&self) -> usize {
        self.membership.n()
    }

    pub fn hollow(&self) -> bool {
        self.hollow
    }

    /// `F_(a,b)` for 0-based blocks in either order.
    pub fn dist(&self, a: usize, b: usize) -> &Distribution {
        &self.dists[pair_index(self.k(), a, b)]
    }

    /// Distributions in [`pair_index`] order.
    pub fn dists(&self) -> &[Distribution] {
        &self.dists
    }

    /// Same distributions on a different membership with the same `K`.
    pub fn with_membership(&self, membership: Membership) -> Result<Self> {
        if membership.k() != self.k() {
            return Err(Error::arg(format!(
                "membership has {} blocks, model has {}",
                membership.k(),
                self.k()
            )));
        }
        BlockModelSpec::new(membership, self.dists.clone(), self.hollow)
    }

    /// Applies `f` to every distribution.
    pub fn map_dists(&self, f: impl FnMut(&Distribution) -> Distribution) -> Self {
        BlockModelSpec {
            membership: self.membership.clone(),
            dists: self.dists.iter().map(f).collect(),
            hollow: self.hollow,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: SpecFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpecFile::from(self))?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blocks: Option<Vec<usize>>,
    /// 1-based labels; alternative to `blocks` for non-contiguous memberships.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<usize>>,
    #[serde(default)]
    hollow: bool,
    dists: BTreeMap<String, Distribution>,
}

impl From<&BlockModelSpec> for SpecFile {
    fn from(spec: &BlockModelSpec) -> Self {
        let (blocks, labels) = match spec.membership.contiguous_sizes() {
            Some(sizes) => (Some(sizes), None),
            None => (None, Some(spec.membership.one_based_labels())),
        };
        let dists = block_pairs(spec.k())
            .into_iter()
            .zip(&spec.dists)
            .map(|((a, b), d)| (format!("{},{}", a + 1, b + 1), d.clone()))
            .collect();
        SpecFile {
            blocks,
            labels,
            hollow: spec.hollow,
            dists,
        }
    }
}

impl From<BlockModelSpec> for SpecFile {
    fn from(spec: BlockModelSpec) -> Self {
        SpecFile::from(&spec)
    }
}

fn parse_pair_key(key: &str, k: usize) -> Result<(usize, usize)> {
    let bad = || Error::arg(format!("distribution key {key:?} is not of the form \"k,l\" with 1 <= k, l <= {k}"));
    let (a, b) = key.split_once(',').ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b == 0 || a > k || b > k {
        return Err(bad());
    }
    Ok((a.min(b) - 1, a.max(b) - 1))
}

impl TryFrom<SpecFile> for BlockModelSpec {
    type Error = Error;

    fn try_from(file: SpecFile) -> Result<Self> {
        let membership = match (file.blocks, file.labels) {
            (Some(sizes), None) => Membership::from_sizes(&sizes)?,
            (None, Some(labels)) => {
                let k = labels.iter().copied().max().unwrap_or(0);
                Membership::from_one_based(&labels, k)?
            }
            _ => {
                return Err(Error::arg(
                    "model spec needs exactly one of \"blocks\" or \"labels\"",
                ))
            }
        };
        let k = membership.k();
        let mut dists: Vec<Option<Distribution>> = vec![None; pair_count(k)];
        for (key, d) in file.dists {
            let (a, b) = parse_pair_key(&key, k)?;
            let slot = &mut dists[pair_index(k, a, b)];
            if slot.is_some() {
                return Err(Error::arg(format!(
                    "block pair ({}, {}) is given more than once",
                    a + 1,
                    b + 1
                )));
            }
            *slot = Some(d);
        }
        let dists = block_pairs(k)
            .into_iter()
            .zip(dists)
            .map(|((a, b), d)| {
                d.ok_or_else(|| {
                    Error::arg(format!("missing distribution for block pair \"{},{}\"", a + 1, b + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        BlockModelSpec::new(membership, dists, file.hollow)
    }
}

/// Draws `A` with independent upper-triangular entries `A_ij ~ F_(g_i, g_j)`.
/// Diagonal entries come from `F_(g_i, g_i)` unless the model is hollow.
pub fn sample_matrix(spec: &BlockModelSpec, seed: SeedStream) -> SymMatrix {
    let mut rng = seed.rng();
    sample_matrix_with(spec, &mut rng)
}

pub(crate) fn sample_matrix_with<R: Rng + ?Sized>(spec: &BlockModelSpec, rng: &mut R) -> SymMatrix {
    let samplers: Vec<Sampler> = spec.dists.iter().map(Distribution::sampler).collect();
    let k = spec.k();
    let g = spec.membership.labels();
    let hollow = spec.hollow;
    SymMatrix::from_upper_fn(spec.n(), |i, j| {
        if i == j && hollow {
            0.0
        } else {
            samplers[pair_index(k, g[i], g[j])].sample(rng)
        }
    })
}

/// A draw from the mixed-membership generator.
#[derive(Debug, Clone)]
pub struct MixedMembershipSample {
    pub matrix: SymMatrix,
    /// `n × K` membership proportions; each row lies on the probability simplex.
    pub theta: DMatrix<f64>,
}

/// `A = ΘBΘᵀ + E` with rows of Θ drawn from `Dirichlet(alpha)` and `E` symmetric with
/// independent `N(0, noise_sigma²)` entries on and above the diagonal.
pub fn sample_mixed_membership(
    n: usize,
    alpha: &[f64],
    b: &DMatrix<f64>,
    noise_sigma: f64,
    seed: SeedStream,
) -> Result<MixedMembershipSample> {
    let k = alpha.len();
    if n == 0 || k == 0 {
        return Err(Error::arg("need at least one node and one block"));
    }
    if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::arg("Dirichlet parameters must be positive and finite"));
    }
    if b.nrows() != k || b.ncols() != k {
        return Err(Error::arg(format!(
            "B must be {k}x{k} to match alpha, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    let b = SymMatrix::new(b.clone())?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::arg(format!("noise sd must be non-negative, got {noise_sigma}")));
    }

    let mut rng = seed.rng();
    // Dirichlet draws as normalized independent Gamma(alpha_k, 1) variates.
    let gammas: Vec<Gamma<f64>> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("validated"))
        .collect();
    let mut theta = DMatrix::zeros(n, k);
    for i in 0..n {
        loop {
            let draws: Vec<f64> = gammas.iter().map(|g| g.sample(&mut rng)).collect();
            let total: f64 = draws.iter().sum();
            if total > 0.0 {
                for (c, v) in draws.into_iter().enumerate() {
                    theta[(i, c)] = v / total;
                }
                break;
            }
        }
    }
    let mean = &theta * b.as_matrix() * theta.transpose();
    let noise = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).expect("validated"));
    let matrix = SymMatrix::from_upper_fn(n, |i, j| {
        let e = noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        mean[(i, j)] + e
    });
    Ok(MixedMembershipSample { matrix, theta })
}
