//! Dense symmetric eigendecomposition, subspace alignment and subspace distances.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tolerances;

/// A dense real symmetric `n × n` matrix. Symmetry is exact: `a[(i,j)] == a[(j,i)]` bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps `data`, rejecting non-square, empty or inexactly symmetric input.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        Self::check_square(&data)?;
        let n = data.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if data[(i, j)] != data[(j, i)] {
                    return Err(Error::arg(format!(
                        "matrix is not symmetric at ({i}, {j}): {} vs {}",
                        data[(i, j)],
                        data[(j, i)]
                    )));
                }
            }
        }
        Ok(SymMatrix { data })
    }

    /// Accepts `|a_ij − a_ji| ≤ tol` and keeps the upper-triangular value for both entries.
    pub fn from_nearly_symmetric(mut data: DMatrix<f64>, tol: f64) -> Result<Self> {
        Self::check_square(&data)?;
        let n = data.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let (u, l) = (data[(i, j)], data[(j, i)]);
                if !((u - l).abs() <= tol) {
                    return Err(Error::arg(format!(
                        "matrix is not symmetric at ({i}, {j}): {u} vs {l}"
                    )));
                }
                data[(j, i)] = u;
            }
        }
        Ok(SymMatrix { data })
    }

    /// Builds a symmetric matrix from a closure evaluated on the upper triangle `i ≤ j`.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(n >= 1, "matrix dimension must be positive");
        let mut data = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        SymMatrix { data }
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be positive");
        SymMatrix {
            data: DMatrix::zeros(n, n),
        }
    }

    fn check_square(data: &DMatrix<f64>) -> Result<()> {
        if data.nrows() == 0 || data.nrows() != data.ncols() {
            return Err(Error::arg(format!(
                "expected a non-empty square matrix, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Applies `f` to every entry, preserving symmetry.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        SymMatrix {
            data: self.data.map(f),
        }
    }

    /// Iterates `(i, j, a_ij)` over the strict upper triangle in row-major order.
    pub fn upper_triangle(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n();
        (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j, self.data[(i, j)])))
    }
}

/// Leading eigenvectors (as orthonormal columns) and their eigenvalues ordered by
/// decreasing magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vectors: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl Embedding {
    /// Validates orthonormality of `vectors` and the magnitude ordering of `eigenvalues`.
    pub fn new(vectors: DMatrix<f64>, eigenvalues: Vec<f64>) -> Result<Self> {
        if vectors.ncols() != eigenvalues.len() {
            return Err(Error::arg(format!(
                "{} eigenvector columns but {} eigenvalues",
                vectors.ncols(),
                eigenvalues.len()
            )));
        }
        let defect = orthonormality_defect(&vectors);
        if defect > tolerances::ORTHONORMALITY {
            return Err(Error::arg(format!(
                "embedding columns are not orthonormal (defect {defect:e})"
            )));
        }
        if eigenvalues.windows(2).any(|w| w[0].abs() < w[1].abs()) {
            return Err(Error::arg("eigenvalues must be ordered by decreasing magnitude"));
        }
        Ok(Embedding {
            vectors,
            eigenvalues,
        })
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn d(&self) -> usize {
        self.vectors.ncols()
    }

    /// The first `d` eigenpairs.
    pub fn truncate(&self, d: usize) -> Result<Embedding> {
        if d == 0 || d > self.d() {
            return Err(Error::arg(format!(
                "cannot truncate a {}-dimensional embedding to {d}",
                self.d()
            )));
        }
        Ok(Embedding {
            vectors: self.vectors.columns(0, d).into_owned(),
            eigenvalues: self.eigenvalues[..d].to_vec(),
        })
    }
}

/// A `d × d` orthogonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMap {
    matrix: DMatrix<f64>,
}

impl OrthogonalMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::arg("orthogonal map must be square"));
        }
        let defect = orthonormality_defect(&matrix);
        if defect > tolerances::ORTHONORMALITY {
            return Err(Error::arg(format!(
                "matrix is not orthogonal (defect {defect:e})"
            )));
        }
        Ok(OrthogonalMap { matrix })
    }

    pub fn identity(d: usize) -> Self {
        OrthogonalMap {
            matrix: DMatrix::identity(d, d),
        }
    }

    pub fn d(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

/// `‖VᵀV − I‖_F`.
pub fn orthonormality_defect(v: &DMatrix<f64>) -> f64 {
    let gram = v.transpose() * v;
    (gram - DMatrix::<f64>::identity(v.ncols(), v.ncols())).norm()
}

/// Full eigendecomposition, ordered by decreasing `|λ|` with the crate's sign convention.
pub fn symmetric_eigen(m: &SymMatrix) -> Result<Embedding> {
    let n = m.n();
    let a = faer::Mat::<f64>::from_fn(n, n, |i, j| m.get(i, j));
    let evd = a
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigendecomposition failed: {e:?}")))?;
    let values = evd.S();
    let vecs = evd.U();

    let mut order: Vec<usize> = (0..n).collect();
    // Decreasing magnitude; exact magnitude ties put the positive eigenvalue first.
    order.sort_by(|&a, &b| {
        let (la, lb) = (values[a], values[b]);
        lb.abs()
            .total_cmp(&la.abs())
            .then_with(|| lb.total_cmp(&la))
    });

    let mut vectors = DMatrix::<f64>::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (col, &k) in order.iter().enumerate() {
        eigenvalues.push(values[k]);
        for i in 0..n {
            vectors[(i, col)] = vecs[(i, k)];
        }
    }
    for col in 0..n {
        apply_sign_convention(&mut vectors, col);
    }
    Ok(Embedding {
        vectors,
        eigenvalues,
    })
}

/// The `d` eigenpairs of largest magnitude.
pub fn eigs_topk(m: &SymMatrix, d: usize) -> Result<Embedding> {
    if d == 0 || d > m.n() {
        return Err(Error::arg(format!(
            "embedding dimension must satisfy 1 <= d <= n = {}, got {d}",
            m.n()
        )));
    }
    symmetric_eigen(m)?.truncate(d)
}

/// Flips column `col` so that its largest-magnitude entry is positive; near-equal
/// magnitudes resolve to the lowest index.
pub(crate) fn apply_sign_convention(vectors: &mut DMatrix<f64>, col: usize) {
    let column = vectors.column(col);
    let max_abs = column.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if max_abs == 0.0 {
        return;
    }
    let cutoff = max_abs * (1.0 - tolerances::SIGN_TIE_RELATIVE);
    let pivot = column
        .iter()
        .position(|v| v.abs() >= cutoff)
        .expect("maximum exists");
    if column[pivot] < 0.0 {
        vectors.column_mut(col).neg_mut();
    }
}

fn check_same_shape(u_hat: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<()> {
    if u_hat.shape() != u.shape() {
        return Err(Error::arg(format!(
            "frames have different shapes: {:?} vs {:?}",
            u_hat.shape(),
            u.shape()
        )));
    }
    if u.ncols() == 0 {
        return Err(Error::arg("frames must have at least one column"));
    }
    Ok(())
}

/// Orthogonal `W` minimizing `‖û − u·W‖_F`: with `uᵀû = X Σ Yᵀ`, `W = X Yᵀ`.
pub fn procrustes_align(u_hat: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<OrthogonalMap> {
    check_same_shape(u_hat, u)?;
    let cross = u.transpose() * u_hat;
    let svd = cross.svd(true, true);
    let x = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not return left factors".into()))?;
    let y_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right factors".into()))?;
    Ok(OrthogonalMap { matrix: x * y_t })
}

/// `‖ûûᵀ − uuᵀ‖_F / ‖uuᵀ‖_F` for orthonormal frames.
pub fn projection_distance(u_hat: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(u_hat, u)?;
    let d = u.ncols() as f64;
    Ok((2.0 * sin_squared_sum(u_hat, u) / d).sqrt())
}

/// Matrix trace correlation `√(trace(P_û P_u)/d)` for full column rank frames.
/// Inputs are orthonormalized internally, so any basis of each subspace gives the same value.
pub fn trace_correlation(u_hat: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(u_hat, u)?;
    let q_hat = orthonormal_basis(u_hat)?;
    let q = orthonormal_basis(u)?;
    let d = u.ncols() as f64;
    let r2 = 1.0 - sin_squared_sum(&q_hat, &q) / d;
    Ok(r2.clamp(0.0, 1.0).sqrt())
}

/// Sum of squared sines of the principal angles, `‖û − u uᵀû‖²_F`. Residual form keeps
/// nearly equal subspaces accurate where `d − ‖uᵀû‖²_F` would cancel.
fn sin_squared_sum(u_hat: &DMatrix<f64>, u: &DMatrix<f64>) -> f64 {
    (u_hat - u * (u.transpose() * u_hat)).norm_squared()
}

fn orthonormal_basis(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if y.nrows() < y.ncols() {
        return Err(Error::arg("frame has more columns than rows"));
    }
    let qr = y.clone().qr();
    let r = qr.r();
    let scale = y.norm().max(f64::MIN_POSITIVE);
    for k in 0..r.ncols() {
        if r[(k, k)].abs() <= tolerances::RANK_DEFICIENCY_RELATIVE * scale {
            return Err(Error::arg(format!(
                "frame is rank deficient (column {k} is dependent on the others)"
            )));
        }
    }
    Ok(qr.q())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use crate::rng::SeedStream;

    fn random_symmetric(n: usize, seed: u64) -> SymMatrix {
        let mut rng = SeedStream::new(seed).rng();
        SymMatrix::from_upper_fn(n, |_, _| rng.sample(StandardNormal))
    }

    pub(crate) fn random_orthonormal(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = SeedStream::new(seed).rng();
        let g = DMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal));
        g.qr().q()
    }

    #[test]
    fn diagonal_matrix() {
        let m = SymMatrix::new(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            3.0, 2.0, 1.0,
        ])))
        .unwrap();
        let e = eigs_topk(&m, 2).unwrap();
        assert_abs_diff_eq!(e.eigenvalues[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.eigenvalues[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.vectors.column(0)[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.vectors.column(1)[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exchange_matrix_orders_positive_first() {
        let m = SymMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let e = eigs_topk(&m, 2).unwrap();
        assert_abs_diff_eq!(e.eigenvalues[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.eigenvalues[1], -1.0, epsilon = 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(e.vectors[(0, 0)], h, epsilon = 1e-12);
        assert_abs_diff_eq!(e.vectors[(1, 0)], h, epsilon = 1e-12);
        assert_abs_diff_eq!(e.vectors[(0, 1)], h, epsilon = 1e-12);
        assert_abs_diff_eq!(e.vectors[(1, 1)], -h, epsilon = 1e-12);
    }

    #[test]
    fn all_ones() {
        let m = SymMatrix::from_upper_fn(3, |_, _| 1.0);
        let e = eigs_topk(&m, 1).unwrap();
        assert_abs_diff_eq!(e.eigenvalues[0], 3.0, epsilon = 1e-12);
        for i in 0..3 {
            assert_abs_diff_eq!(e.vectors[(i, 0)], 1.0 / 3f64.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_out_of_range() {
        let m = SymMatrix::zeros(3);
        assert!(matches!(eigs_topk(&m, 0), Err(Error::Argument(_))));
        assert!(matches!(eigs_topk(&m, 4), Err(Error::Argument(_))));
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(SymMatrix::new(m.clone()).is_err());
        assert!(SymMatrix::from_nearly_symmetric(m, 1e-9).is_err());
        let ok = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0 + 1e-12, 0.0]);
        let s = SymMatrix::from_nearly_symmetric(ok, 1e-9).unwrap();
        assert_eq!(s.get(1, 0), 1.0);
    }

    #[test]
    fn residuals_and_reconstruction() {
        for (n, seed) in [(5, 1), (40, 2), (500, 3)] {
            let m = random_symmetric(n, seed);
            let e = symmetric_eigen(&m).unwrap();
            assert!(orthonormality_defect(&e.vectors) <= tolerances::ORTHONORMALITY);
            for k in 0..n {
                let u = e.vectors.column(k);
                let r = (m.as_matrix() * u - u * e.eigenvalues[k]).norm();
                assert!(
                    r <= tolerances::EIGEN_RESIDUAL * e.eigenvalues[k].abs().max(1.0),
                    "residual {r} for n={n}, k={k}"
                );
            }
            if n <= 40 {
                let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
                    e.eigenvalues.clone(),
                ));
                let rec = &e.vectors * lambda * e.vectors.transpose();
                let rel = (rec - m.as_matrix()).norm() / m.as_matrix().norm();
                assert!(rel <= 1e-8, "reconstruction error {rel}");
            }
        }
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let u = random_orthonormal(8, 3, 11);
        let q = random_orthonormal(3, 3, 12);
        let u_hat = &u * &q;
        let w = procrustes_align(&u_hat, &u).unwrap();
        assert!((&u_hat - &u * w.matrix()).norm() <= 1e-10);
        let id = procrustes_align(&u, &u).unwrap();
        assert!((id.matrix() - DMatrix::<f64>::identity(3, 3)).norm() <= 1e-10);
    }

    #[test]
    fn procrustes_matches_grid_search() {
        // Exhaustive search over 2x2 rotations and reflections.
        let u = random_orthonormal(6, 2, 21);
        let u_hat = random_orthonormal(6, 2, 22);
        let w = procrustes_align(&u_hat, &u).unwrap();
        let cost = (&u_hat - &u * w.matrix()).norm_squared();
        let mut best = f64::INFINITY;
        let steps = 200_000;
        for s in 0..steps {
            let t = 2.0 * std::f64::consts::PI * s as f64 / steps as f64;
            let (c, si) = (t.cos(), t.sin());
            for refl in [1.0, -1.0] {
                let g = DMatrix::from_row_slice(2, 2, &[c, -si * refl, si, c * refl]);
                best = best.min((&u_hat - &u * g).norm_squared());
            }
        }
        assert!(cost <= best + 1e-6, "procrustes {cost} vs grid {best}");
        assert!((cost - best).abs() <= 1e-6);
    }

    #[test]
    fn procrustes_dominates_random_orthogonal() {
        let u = random_orthonormal(20, 3, 31);
        let u_hat = random_orthonormal(20, 3, 32);
        let w = procrustes_align(&u_hat, &u).unwrap();
        let cost = (&u_hat - &u * w.matrix()).norm_squared();
        for s in 0..1000 {
            let q = random_orthonormal(3, 3, 1000 + s);
            assert!(cost <= (&u_hat - &u * q).norm_squared() + 1e-12);
        }
    }

    #[test]
    fn subspace_metrics() {
        let u = random_orthonormal(10, 2, 41);
        assert_abs_diff_eq!(projection_distance(&u, &u).unwrap(), 0.0, epsilon = 1e-7);
        assert_abs_diff_eq!(trace_correlation(&u, &u).unwrap(), 1.0, epsilon = 1e-12);

        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert_abs_diff_eq!(
            projection_distance(&e1, &e2).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(trace_correlation(&e1, &e2).unwrap(), 0.0, epsilon = 1e-12);

        // span{e1,e2} vs span{e1,e3} in R^4: projector product has trace 1.
        let a = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_abs_diff_eq!(
            trace_correlation(&a, &b).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-12
        );
        // a non-orthonormal basis of the same subspace gives the same value
        let b2 = DMatrix::from_column_slice(4, 2, &[2.0, 0.0, 1.0, 0.0, 1.0, 0.0, 3.0, 0.0]);
        assert_abs_diff_eq!(
            trace_correlation(&a, &b2).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn metric_errors() {
        let a = random_orthonormal(5, 2, 1);
        let b = random_orthonormal(5, 3, 2);
        assert!(projection_distance(&a, &b).is_err());
        assert!(procrustes_align(&a, &b).is_err());
        assert!(trace_correlation(&a, &b).is_err());
        let deficient = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let full = random_orthonormal(3, 2, 3);
        assert!(matches!(
            trace_correlation(&deficient, &full),
            Err(Error::Argument(_))
        ));
    }
}
