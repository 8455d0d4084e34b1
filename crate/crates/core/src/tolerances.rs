//! Numerical tolerances shared across the crate.
//!
//! Every threshold that decides a pass/fail or a convergence criterion lives
//! here so it can be tuned in one place.

/// Orthonormality of embedding columns and orthogonal maps (Frobenius norm of `VᵀV − I`).
pub const ORTHONORMALITY: f64 = 1e-10;

/// Eigenpair residual `‖M·u − λ·u‖₂ ≤ EIGEN_RESIDUAL · max(1, |λ|)`.
pub const EIGEN_RESIDUAL: f64 = 1e-8;

/// Relative tolerance under which two eigenvector entries count as tied in magnitude
/// for the sign convention.
pub const SIGN_TIE_RELATIVE: f64 = 1e-12;

/// Relative threshold below which a triangular factor's diagonal marks a rank-deficient frame.
pub const RANK_DEFICIENCY_RELATIVE: f64 = 1e-10;

/// Absolute accuracy of the one-dimensional CDF functionals.
pub const CDF_MOMENT_ABS: f64 = 1e-9;

/// Absolute accuracy of the nested `g` functional.
pub const G_MOMENT_ABS: f64 = 1e-7;

/// Numerical quantiles stop once `|F(x) − u| ≤ QUANTILE_PROBABILITY_RELATIVE · min(u, 1 − u)`
/// or the bracket has shrunk to a few ulps.
pub const QUANTILE_PROBABILITY_RELATIVE: f64 = 1e-13;

/// Mixture weights must sum to one within this tolerance.
pub const MIXTURE_WEIGHT_SUM: f64 = 1e-12;

/// Largest `|a_ij − a_ji|` accepted when loading a dense matrix from disk.
pub const LOAD_SYMMETRY: f64 = 1e-9;

/// Lloyd iterations stop when the relative cost change drops below this.
pub const KMEANS_RELATIVE_COST_CHANGE: f64 = 1e-10;

/// Hard cap on Lloyd iterations per restart.
pub const KMEANS_MAX_ITERATIONS: usize = 200;

/// Population rank check: smallest `|eigenvalue|` of `Δ B̃ Δ` must exceed this times `n`.
pub const POPULATION_RANK_RELATIVE: f64 = 1e-10;

/// Width of Monte Carlo agreement bands, in standard errors.
pub const MONTE_CARLO_SIGMAS: f64 = 3.0;

/// One-sided 99% standard normal quantile.
pub const Z_ONE_SIDED_99: f64 = 2.326_347_874_040_841;
