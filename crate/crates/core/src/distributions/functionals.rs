//! Moment functionals `E_ℓ[F_ℓ′(X)]`, `E_ℓ[F_ℓ′(X)F_ℓ″(X)]` and `E_ℓ[g_(m,ℓ′)(X)]`.
//!
//! All quadratures run on the probability scale of the outer distribution, where
//! the integrands are bounded by one even for heavy-tailed families.

use std::f64::consts::PI;

use statrs::function::erf;

use super::quadrature::integrate;
use super::Distribution;
use crate::error::Result;
use crate::tolerances;

/// Target for the one-dimensional functionals, leaving headroom below the contract.
const CDF_QUADRATURE_TOL: f64 = tolerances::CDF_MOMENT_ABS / 10.0;
const G_OUTER_TOL: f64 = tolerances::G_MOMENT_ABS / 10.0;
const G_INNER_TOL: f64 = tolerances::CDF_MOMENT_ABS / 10.0;

/// `E_ℓ[F_ℓ′(X)] = Pr[Y ≤ X]` for independent `X ~ ℓ`, `Y ~ ℓ′`.
pub fn cross_cdf_moment(l: &Distribution, lp: &Distribution) -> Result<f64> {
    match closed_cross(l, lp) {
        Some(v) => Ok(v),
        None => cross_cdf_moment_quadrature(l, lp),
    }
}

/// [`cross_cdf_moment`] forced through quadrature, bypassing closed forms.
pub fn cross_cdf_moment_quadrature(l: &Distribution, lp: &Distribution) -> Result<f64> {
    Ok(integrate(|u| lp.cdf(l.quantile(u)), 0.0, 1.0, CDF_QUADRATURE_TOL)?.value)
}

/// `E_ℓ[F_ℓ′(X)·F_ℓ″(X)]`.
pub fn cross_cdf_product_moment(
    l: &Distribution,
    lp: &Distribution,
    lpp: &Distribution,
) -> Result<f64> {
    match closed_product(l, lp, lpp) {
        Some(v) => Ok(v),
        None => cross_cdf_product_moment_quadrature(l, lp, lpp),
    }
}

/// [`cross_cdf_product_moment`] forced through quadrature.
pub fn cross_cdf_product_moment_quadrature(
    l: &Distribution,
    lp: &Distribution,
    lpp: &Distribution,
) -> Result<f64> {
    let est = integrate(
        |u| {
            let x = l.quantile(u);
            lp.cdf(x) * lpp.cdf(x)
        },
        0.0,
        1.0,
        CDF_QUADRATURE_TOL,
    )?;
    Ok(est.value)
}

/// `E_outer[g_(m′, inner)(X)]` with `g_(m′, inner)(z) = ∫_{−∞}^{z} F_m′(y) f_inner(y) dy`,
/// which equals `Pr[A ≤ B ≤ C]` for independent `A ~ m′`, `B ~ inner`, `C ~ outer`.
pub fn g_moment(m_prime: &Distribution, inner: &Distribution, outer: &Distribution) -> Result<f64> {
    if m_prime == inner && inner == outer {
        return Ok(1.0 / 6.0);
    }
    g_moment_quadrature(m_prime, inner, outer)
}

/// [`g_moment`] by nested quadrature: the inner integral runs over the probability
/// scale of `inner` up to `F_inner(c)`, the outer one over the probability scale of `outer`.
pub fn g_moment_quadrature(
    m_prime: &Distribution,
    inner: &Distribution,
    outer: &Distribution,
) -> Result<f64> {
    let mut failure = None;
    let est = integrate(
        |u| {
            if failure.is_some() {
                return 0.0;
            }
            let t = inner.cdf(outer.quantile(u));
            if t <= 0.0 {
                return 0.0;
            }
            match integrate(|v| m_prime.cdf(inner.quantile(v)), 0.0, t, G_INNER_TOL) {
                Ok(e) => e.value,
                Err(e) => {
                    failure = Some(e);
                    0.0
                }
            }
        },
        0.0,
        1.0,
        G_OUTER_TOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(est?.value)
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erf::erfc(-z / std::f64::consts::SQRT_2)
}

// ∫ clamp((x − c)/(d − c), 0, 1) dx, the antiderivative vanishing left of c.
fn uniform_cdf_antiderivative(x: f64, c: f64, d: f64) -> f64 {
    if x <= c {
        0.0
    } else if x < d {
        (x - c).powi(2) / (2.0 * (d - c))
    } else {
        0.5 * (d - c) + (x - d)
    }
}

fn closed_cross(l: &Distribution, lp: &Distribution) -> Option<f64> {
    use Distribution::*;
    if l == lp {
        return Some(0.5);
    }
    match (l, lp) {
        (Exponential { mean: m1 }, Exponential { mean: m2 }) => Some(m1 / (m1 + m2)),
        (Normal { mu: a, sigma: s }, Normal { mu: b, sigma: t }) => {
            Some(std_normal_cdf((a - b) / (s * s + t * t).sqrt()))
        }
        (Cauchy { x0: a, gamma: s }, Cauchy { x0: b, gamma: t }) => {
            Some(0.5 + ((a - b) / (s + t)).atan() / PI)
        }
        (Pareto { m: m1, alpha: a1 }, Pareto { m: m2, alpha: a2 }) => Some(if m1 >= m2 {
            1.0 - a1 / (a1 + a2) * (m2 / m1).powf(*a2)
        } else {
            (m1 / m2).powf(*a1) * a2 / (a1 + a2)
        }),
        (Uniform { lo: a, hi: b }, Uniform { lo: c, hi: d }) => Some(
            (uniform_cdf_antiderivative(*b, *c, *d) - uniform_cdf_antiderivative(*a, *c, *d))
                / (b - a),
        ),
        _ => None,
    }
}

fn closed_product(l: &Distribution, lp: &Distribution, lpp: &Distribution) -> Option<f64> {
    use Distribution::*;
    if l == lp && lp == lpp {
        return Some(1.0 / 3.0);
    }
    match (l, lp, lpp) {
        (Exponential { mean: a }, Exponential { mean: b }, Exponential { mean: c }) => {
            // E[e^{−tX}] = 1/(1 + t·a) for X ~ Exp(mean a).
            let (rb, rc) = (a / b, a / c);
            Some(1.0 - 1.0 / (1.0 + rb) - 1.0 / (1.0 + rc) + 1.0 / (1.0 + rb + rc))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    use crate::rng::SeedStream;

    fn exp(mean: f64) -> Distribution {
        Distribution::exponential(mean).unwrap()
    }
    fn unif(lo: f64, hi: f64) -> Distribution {
        Distribution::uniform(lo, hi).unwrap()
    }
    fn normal(mu: f64, sigma: f64) -> Distribution {
        Distribution::normal(mu, sigma).unwrap()
    }

    fn family_pairs() -> Vec<(Distribution, Distribution)> {
        vec![
            (exp(2.0), exp(1.0)),
            (exp(0.3), exp(5.0)),
            (normal(0.0, 1.0), normal(1.0, 1.0)),
            (normal(2.0, 8.0), normal(0.5, 2.0)),
            (
                Distribution::cauchy(1.0, 2.0).unwrap(),
                Distribution::cauchy(-0.5, 0.3).unwrap(),
            ),
            (
                Distribution::pareto(1.0, 1.0).unwrap(),
                Distribution::pareto(2.0, 1.0).unwrap(),
            ),
            (
                Distribution::pareto(3.0, 1.5).unwrap(),
                Distribution::pareto(1.0, 0.8).unwrap(),
            ),
            (unif(0.0, 1.0), unif(0.5, 2.0)),
            (unif(-1.0, 0.2), unif(0.0, 1.0)),
            (unif(0.0, 3.0), unif(1.0, 2.0)),
        ]
    }

    #[test]
    fn identical_distributions() {
        for d in [normal(2.0, 3.0), exp(1.0), Distribution::gamma(2.0, 0.5).unwrap()] {
            assert_eq!(cross_cdf_moment(&d, &d).unwrap(), 0.5);
            assert_eq!(cross_cdf_product_moment(&d, &d, &d).unwrap(), 1.0 / 3.0);
            assert_eq!(g_moment(&d, &d, &d).unwrap(), 1.0 / 6.0);
            assert_abs_diff_eq!(cross_cdf_moment_quadrature(&d, &d).unwrap(), 0.5, epsilon = 1e-9);
            assert_abs_diff_eq!(
                cross_cdf_product_moment_quadrature(&d, &d, &d).unwrap(),
                1.0 / 3.0,
                epsilon = 1e-9
            );
            assert_abs_diff_eq!(g_moment_quadrature(&d, &d, &d).unwrap(), 1.0 / 6.0, epsilon = 1e-7);
        }
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for (a, b) in family_pairs() {
            for (l, lp) in [(&a, &b), (&b, &a)] {
                let closed = closed_cross(l, lp).expect("closed form available");
                let quad = cross_cdf_moment_quadrature(l, lp).unwrap();
                assert!((closed - quad).abs() <= 1e-9, "{l:?} vs {lp:?}: {closed} vs {quad}");
            }
        }
        let (a, b, c) = (exp(1.0), exp(2.5), exp(0.4));
        let closed = closed_product(&a, &b, &c).unwrap();
        let quad = cross_cdf_product_moment_quadrature(&a, &b, &c).unwrap();
        assert_abs_diff_eq!(closed, quad, epsilon = 1e-9);
    }

    #[test]
    fn spec_values() {
        assert_abs_diff_eq!(cross_cdf_moment(&exp(2.0), &exp(1.0)).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        // Φ(1/√2)
        let v = cross_cdf_moment(&normal(1.0, 1.0), &normal(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(v, 0.760_249_938_906_8, epsilon = 1e-9);
        assert_abs_diff_eq!(
            cross_cdf_product_moment_quadrature(&unif(0.0, 1.0), &unif(0.0, 1.0), &unif(0.0, 1.0))
                .unwrap(),
            1.0 / 3.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            cross_cdf_product_moment(&unif(0.0, 1.0), &unif(0.0, 1.0), &unif(0.0, 2.0)).unwrap(),
            1.0 / 6.0,
            epsilon = 1e-9
        );
        let far_below = unif(-101.0, -100.0);
        assert_abs_diff_eq!(
            cross_cdf_product_moment(&unif(0.0, 1.0), &far_below, &far_below).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn complementary_cross_moments() {
        let extra = [
            (Distribution::gamma(3.0, 1.0 / 3.0).unwrap(), Distribution::gamma(2.0, 0.5).unwrap()),
            (Distribution::beta(2.0, 5.0).unwrap(), unif(0.0, 1.0)),
            (
                Distribution::contaminated_normal(2.0, 3.0, 0.01, 100.0).unwrap(),
                Distribution::contaminated_normal(1.0, 3.0, 0.01, 100.0).unwrap(),
            ),
            (Distribution::cauchy(0.0, 1.0).unwrap(), normal(0.3, 0.1)),
        ];
        for (a, b) in family_pairs().into_iter().chain(extra) {
            let s = cross_cdf_moment(&a, &b).unwrap() + cross_cdf_moment(&b, &a).unwrap();
            assert!((s - 1.0).abs() <= 1e-8, "{a:?}, {b:?}: {s}");
        }
    }

    fn g_identity(m: &Distribution, inner: &Distribution, outer: &Distribution) -> f64 {
        // Pr[A ≤ B ≤ C] = E_B[F_A(B)] − E_B[F_A(B)·F_C(B)]
        cross_cdf_moment_quadrature(inner, m).unwrap()
            - cross_cdf_product_moment_quadrature(inner, m, outer).unwrap()
    }

    #[test]
    fn g_matches_one_dimensional_identity() {
        let triples = [
            (unif(0.0, 1.0), exp(1.0), normal(0.0, 1.0)),
            (normal(0.0, 1.0), unif(0.0, 1.0), exp(1.0)),
            (exp(2.0), exp(1.0), exp(0.5)),
            (normal(2.0, 3.0), normal(1.0, 3.0), normal(2.0, 3.0)),
            (
                Distribution::pareto(1.0, 1.0).unwrap(),
                Distribution::pareto(2.0, 1.0).unwrap(),
                Distribution::pareto(3.0, 1.0).unwrap(),
            ),
            (
                Distribution::cauchy(0.0, 1.0).unwrap(),
                normal(0.0, 1.0),
                Distribution::gamma(2.0, 1.0).unwrap(),
            ),
        ];
        for (m, inner, outer) in &triples {
            let nested = g_moment(m, inner, outer).unwrap();
            let oracle = g_identity(m, inner, outer);
            assert!((nested - oracle).abs() <= 1e-7, "{nested} vs {oracle}");
        }
    }

    #[test]
    fn g_orderings_sum_to_one() {
        let d = [unif(0.0, 2.0), exp(1.0), normal(0.5, 1.0)];
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let total: f64 = perms
            .iter()
            .map(|p| g_moment(&d[p[0]], &d[p[1]], &d[p[2]]).unwrap())
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn g_matches_monte_carlo() {
        let (a, b, c) = (unif(0.0, 1.0), unif(0.3, 1.2), unif(0.5, 2.0));
        let exact = g_moment(&a, &b, &c).unwrap();
        let draws = 1_000_000;
        let mut rng = SeedStream::new(5).rng();
        let hits = (0..draws)
            .filter(|_| {
                let (x, y, z): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
                let (x, y, z) = (x, 0.3 + 0.9 * y, 0.5 + 1.5 * z);
                x <= y && y <= z
            })
            .count();
        let p = hits as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((p - exact).abs() <= 3.0 * se, "mc {p} vs exact {exact} (se {se})");
    }
}
