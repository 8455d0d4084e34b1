//! Eigenstructure of rank-`K` block matrices `ΘMΘᵀ`.

use nalgebra::DMatrix;

use super::{BlockModelSpec, Membership, RankMomentEngine};
use crate::error::{Error, Result};
use crate::linalg::{apply_sign_convention, symmetric_eigen, Embedding, SymMatrix};
use crate::tolerances;

/// Population embedding of `ΘB̃Θᵀ` together with its spectral gap quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationEigen {
    /// `U = ΘΔ⁻¹V` with the nonzero eigenvalues of `ΘB̃Θᵀ`.
    pub embedding: Embedding,
    /// Eigenvectors `V` of `ΔB̃Δ`, signed consistently with `U`.
    pub v: DMatrix<f64>,
    /// Smallest nonzero singular value of `ΘB̃Θᵀ`.
    pub gamma_n: f64,
    /// Eigenvalue of `B̃` with the smallest magnitude.
    pub lambda_k_b_tilde: f64,
    pub b_tilde: DMatrix<f64>,
}

/// `ΘΔ⁻¹`, an orthonormal basis of the block-indicator subspace.
pub fn block_subspace(membership: &Membership) -> Result<DMatrix<f64>> {
    membership.require_nonempty()?;
    let sizes = membership.sizes();
    let mut u = DMatrix::zeros(membership.n(), membership.k());
    for (i, &g) in membership.labels().iter().enumerate() {
        u[(i, g)] = 1.0 / (sizes[g] as f64).sqrt();
    }
    Ok(u)
}

/// Eigenpairs of `ΘMΘᵀ` for a symmetric `K × K` matrix `M` assumed to have full rank.
/// Returns the embedding and `V`.
pub fn block_matrix_eigen(
    membership: &Membership,
    m: &DMatrix<f64>,
) -> Result<(Embedding, DMatrix<f64>)> {
    let k = membership.k();
    if m.shape() != (k, k) {
        return Err(Error::arg(format!(
            "block matrix is {}x{} but there are {k} blocks",
            m.nrows(),
            m.ncols()
        )));
    }
    let basis = block_subspace(membership)?;
    let root: Vec<f64> = membership.sizes().iter().map(|&s| (s as f64).sqrt()).collect();
    let scaled = SymMatrix::from_upper_fn(k, |a, b| root[a] * m[(a, b)] * root[b]);
    let eig = symmetric_eigen(&scaled)?;
    let n = membership.n() as f64;
    if let Some(&small) = eig.eigenvalues.last() {
        if small.abs() <= tolerances::POPULATION_RANK_RELATIVE * n {
            return Err(Error::Model(format!(
                "block matrix is rank deficient: eigenvalue {small:e} of ΔMΔ is below {:e}",
                tolerances::POPULATION_RANK_RELATIVE * n
            )));
        }
    }
    let mut u = &basis * &eig.vectors;
    let mut v = eig.vectors;
    for col in 0..k {
        let before = u[(0, col)];
        apply_sign_convention(&mut u, col);
        if u[(0, col)] != before {
            v.column_mut(col).neg_mut();
        }
    }
    Ok((Embedding::new(u, eig.eigenvalues)?, v))
}

/// `U` of `ΘB̃Θᵀ` at the model's block sizes.
pub fn population_eigvecs(spec: &BlockModelSpec) -> Result<PopulationEigen> {
    let b_tilde = RankMomentEngine::for_spec(spec)?.b_tilde(spec.k())?;
    let (embedding, v) = block_matrix_eigen(spec.membership(), &b_tilde)?;
    let gamma_n = embedding
        .eigenvalues
        .last()
        .map(|l| l.abs())
        .expect("at least one block");
    let small = symmetric_eigen(&SymMatrix::from_upper_fn(spec.k(), |a, b| b_tilde[(a, b)]))?;
    Ok(PopulationEigen {
        embedding,
        v,
        gamma_n,
        lambda_k_b_tilde: *small.eigenvalues.last().expect("at least one block"),
        b_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Distribution;
    use approx::assert_abs_diff_eq;

    fn spec(sizes: &[usize], dists: Vec<Distribution>) -> BlockModelSpec {
        BlockModelSpec::new(Membership::from_sizes(sizes).unwrap(), dists, true).unwrap()
    }

    #[test]
    fn block_rows_and_separation() {
        let s = spec(
            &[3, 5, 4],
            vec![
                Distribution::normal(3.0, 1.0).unwrap(),
                Distribution::normal(0.0, 1.0).unwrap(),
                Distribution::normal(1.0, 1.0).unwrap(),
                Distribution::normal(2.5, 1.0).unwrap(),
                Distribution::normal(-1.0, 1.0).unwrap(),
                Distribution::normal(4.0, 1.0).unwrap(),
            ],
        );
        let p = population_eigvecs(&s).unwrap();
        let u = &p.embedding.vectors;
        let g = s.membership().labels();
        let sizes = s.membership().sizes();
        for i in 0..12 {
            for j in 0..12 {
                let dist = (u.row(i) - u.row(j)).norm();
                if g[i] == g[j] {
                    assert_abs_diff_eq!(dist, 0.0, epsilon = 1e-12);
                } else {
                    let want = (1.0 / sizes[g[i]] as f64 + 1.0 / sizes[g[j]] as f64).sqrt();
                    assert_abs_diff_eq!(dist, want, epsilon = 1e-12);
                }
            }
        }
        // U really spans the eigenvectors of ΘB̃Θᵀ
        let theta = s.membership().theta();
        let full = &theta * &p.b_tilde * theta.transpose();
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(p.embedding.eigenvalues.clone()));
        assert!((&full * u - u * lambda).norm() < 1e-12);
        assert_abs_diff_eq!(p.gamma_n, p.embedding.eigenvalues[2].abs(), epsilon = 0.0);
        assert_eq!(u, &(block_subspace(s.membership()).unwrap() * &p.v));
    }

    #[test]
    fn symmetric_two_block_signs() {
        let f = Distribution::normal(2.0, 1.0).unwrap();
        let s = spec(&[5, 5], vec![f.clone(), Distribution::normal(1.0, 1.0).unwrap(), f]);
        let u = population_eigvecs(&s).unwrap().embedding.vectors;
        let root = 1.0 / 10f64.sqrt();
        for i in 0..10 {
            assert_abs_diff_eq!(u[(i, 0)], root, epsilon = 1e-12);
            let sign = if i < 5 { 1.0 } else { -1.0 };
            assert_abs_diff_eq!(u[(i, 1)].abs(), root, epsilon = 1e-12);
            assert_abs_diff_eq!(u[(i, 1)] * u[(0, 1)].signum(), sign * root, epsilon = 1e-12);
        }
    }

    #[test]
    fn rank_deficient_rejected() {
        let f = Distribution::uniform(0.0, 1.0).unwrap();
        let s = spec(&[4, 4], vec![f.clone(), f.clone(), f]);
        match population_eigvecs(&s) {
            Err(Error::Model(msg)) => assert!(msg.contains("eigenvalue")),
            other => panic!("expected a model error, got {other:?}"),
        }
    }
}
