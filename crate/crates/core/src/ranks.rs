//! Entrywise pass-to-ranks transform.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;

/// How equal upper-triangular entries are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMode {
    /// Any exact tie is an error.
    #[default]
    Strict,
    /// Tied entries share the average of the normalized ranks they span.
    Midrank,
}

impl std::str::FromStr for TieMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(TieMode::Strict),
            "midrank" => Ok(TieMode::Midrank),
            other => Err(Error::arg(format!(
                "unknown tie mode {other:?} (expected strict or midrank)"
            ))),
        }
    }
}

/// Symmetric matrix of normalized ranks with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct RankMatrix {
    matrix: SymMatrix,
}

impl RankMatrix {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// Number of upper-triangular entries, `n(n−1)/2`.
    pub fn pair_count(&self) -> usize {
        let n = self.n();
        n * (n - 1) / 2
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> SymMatrix {
        self.matrix
    }
}

impl AsRef<SymMatrix> for RankMatrix {
    fn as_ref(&self) -> &SymMatrix {
        &self.matrix
    }
}

/// Replaces each upper-triangular entry by its rank among all `N = n(n−1)/2`
/// such entries divided by `N + 1`, mirrors it, and zeroes the diagonal.
pub fn pass_to_ranks(a: &SymMatrix, tie_mode: TieMode) -> Result<RankMatrix> {
    let n = a.n();
    if n < 2 {
        return Err(Error::arg(format!(
            "pass-to-ranks needs n >= 2, got n = {n}"
        )));
    }
    let mut entries: Vec<(f64, usize, usize)> =
        a.upper_triangle().map(|(i, j, v)| (v, i, j)).collect();
    if let Some(&(v, i, j)) = entries.iter().find(|e| e.0.is_nan()) {
        return Err(Error::arg(format!("entry ({i}, {j}) is {v}")));
    }
    entries.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));

    let count = entries.len();
    let denominator = count as f64 + 1.0;
    let mut out = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut start = 0;
    while start < count {
        let mut end = start + 1;
        // -0.0 and 0.0 compare equal and are treated as a tie.
        while end < count && entries[end].0 == entries[start].0 {
            end += 1;
        }
        if end - start > 1 && tie_mode == TieMode::Strict {
            let (v, i0, j0) = entries[start];
            let (_, i1, j1) = entries[start + 1];
            return Err(Error::Tie {
                value: v,
                first: (i0, j0),
                second: (i1, j1),
            });
        }
        // Ranks start..end (0-based) map to 1-based ranks start+1..=end.
        let rank = (start + 1 + end) as f64 / 2.0;
        let value = rank / denominator;
        for &(_, i, j) in &entries[start..end] {
            out[(i, j)] = value;
            out[(j, i)] = value;
        }
        start = end;
    }
    Ok(RankMatrix {
        matrix: SymMatrix::new(out).expect("filled symmetrically"),
    })
}

/// `R̃ − E[R̃]` entrywise.
pub fn center_ranks(r: &RankMatrix, expected: &SymMatrix) -> Result<SymMatrix> {
    if r.n() != expected.n() {
        return Err(Error::arg(format!(
            "rank matrix is {0}x{0} but expectation is {1}x{1}",
            r.n(),
            expected.n()
        )));
    }
    let diff = r.matrix().as_matrix() - expected.as_matrix();
    Ok(SymMatrix::new(diff).expect("difference of symmetric matrices"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    use crate::rng::SeedStream;

    fn three_by_three() -> SymMatrix {
        SymMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[9.0, 0.5, -1.2, 0.5, 9.0, 3.0, -1.2, 3.0, 9.0],
        ))
        .unwrap()
    }

    #[test]
    fn small_example() {
        let r = pass_to_ranks(&three_by_three(), TieMode::Strict).unwrap();
        let m = r.matrix();
        assert_eq!(m.get(0, 1), 0.5);
        assert_eq!(m.get(0, 2), 0.25);
        assert_eq!(m.get(1, 2), 0.75);
        assert_eq!(m.get(2, 1), 0.75);
        for i in 0..3 {
            assert_eq!(m.get(i, i), 0.0);
        }
    }

    #[test]
    fn two_nodes() {
        let a = SymMatrix::from_upper_fn(2, |_, _| -7.3);
        let r = pass_to_ranks(&a, TieMode::Strict).unwrap();
        assert_eq!(r.matrix().get(0, 1), 0.5);
    }

    #[test]
    fn too_small() {
        let a = SymMatrix::zeros(1);
        assert!(matches!(
            pass_to_ranks(&a, TieMode::Strict),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn strict_tie_names_pair() {
        let a = SymMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0],
        ))
        .unwrap();
        match pass_to_ranks(&a, TieMode::Strict) {
            Err(Error::Tie {
                value,
                first,
                second,
            }) => {
                assert_eq!(value, 1.0);
                assert_eq!(first, (0, 1));
                assert_eq!(second, (1, 2));
            }
            other => panic!("expected a tie error, got {other:?}"),
        }
        let r = pass_to_ranks(&a, TieMode::Midrank).unwrap();
        // ranks 1 and 2 averaged, then /4
        assert_eq!(r.matrix().get(0, 1), 0.375);
        assert_eq!(r.matrix().get(1, 2), 0.375);
        assert_eq!(r.matrix().get(0, 2), 0.75);
    }

    fn gaussian(n: usize, seed: u64) -> SymMatrix {
        let mut rng = SeedStream::new(seed).rng();
        SymMatrix::from_upper_fn(n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn matches_sort_oracle() {
        let a = gaussian(5, 3);
        let r = pass_to_ranks(&a, TieMode::Strict).unwrap();
        let mut values: Vec<f64> = a.upper_triangle().map(|e| e.2).collect();
        values.sort_by(f64::total_cmp);
        for (i, j, v) in a.upper_triangle() {
            let rank = values.iter().position(|&x| x == v).unwrap() + 1;
            assert_eq!(r.matrix().get(i, j), rank as f64 / 11.0);
        }
    }

    #[test]
    fn centering() {
        let r = pass_to_ranks(&gaussian(4, 1), TieMode::Strict).unwrap();
        let zero = center_ranks(&r, r.matrix()).unwrap();
        assert!(zero.as_matrix().iter().all(|&v| v == 0.0));

        let half = SymMatrix::from_upper_fn(4, |i, j| if i == j { 0.0 } else { 0.5 });
        let c = center_ranks(&r, &half).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.0 } else { r.matrix().get(i, j) - 0.5 };
                assert_eq!(c.get(i, j), want);
            }
        }

        let r3 = pass_to_ranks(&three_by_three(), TieMode::Strict).unwrap();
        let e = SymMatrix::from_upper_fn(3, |i, j| (i + j) as f64 * 0.1);
        let c = center_ranks(&r3, &e).unwrap();
        assert_abs_diff_eq!(c.get(1, 2), 0.75 - 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(c.get(0, 0), 0.0, epsilon = 1e-15);

        assert!(center_ranks(&r3, &half).is_err());
    }

    proptest! {
        #[test]
        fn rank_properties(n in 2usize..12, seed in any::<u64>(), shift in -5.0..5.0f64, slope in 0.1..10.0f64) {
            let a = gaussian(n, seed);
            let r = pass_to_ranks(&a, TieMode::Strict).unwrap();
            let count = n * (n - 1) / 2;

            let sum: f64 = r.matrix().upper_triangle().map(|e| e.2).sum();
            prop_assert!((sum - count as f64 / 2.0).abs() < 1e-9);
            let mut ranks: Vec<usize> = r
                .matrix()
                .upper_triangle()
                .map(|e| (e.2 * (count as f64 + 1.0)).round() as usize)
                .collect();
            ranks.sort_unstable();
            prop_assert_eq!(ranks, (1..=count).collect::<Vec<_>>());
            for i in 0..n {
                prop_assert_eq!(r.matrix().get(i, i), 0.0);
                for j in 0..n {
                    prop_assert_eq!(r.matrix().get(i, j), r.matrix().get(j, i));
                }
            }

            let affine = pass_to_ranks(&a.map(|v| slope * v + shift), TieMode::Strict).unwrap();
            prop_assert_eq!(&affine, &r);
            let exp = pass_to_ranks(&a.map(f64::exp), TieMode::Strict).unwrap();
            prop_assert_eq!(&exp, &r);
            let mid = pass_to_ranks(&a, TieMode::Midrank).unwrap();
            prop_assert_eq!(&mid, &r);
        }
    }
}
