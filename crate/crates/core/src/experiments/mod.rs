//! Seeded reproductions of numerical studies and empirical checks of theoretical
//! bounds. Every runner returns an [`ExperimentReport`] that can be written to disk.

mod report;
pub mod stats;
mod studies;
mod theory;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub use report::{format_value, parse_value, Column, ExperimentReport, PassFlag, Table};
pub use studies::{
    contaminated_normal_spec, contour_spec, corrupt_with_cauchy, overlay_spec, pareto_b11_limit,
    pareto_spec, run_contaminated_normal, run_contour_ratio, run_mixed_membership, run_overlay,
    run_pareto, ContaminatedNormalConfig, ContourConfig, MixedMembershipConfig, OverlayConfig,
    ParetoConfig, EPSILON_K,
};
pub use theory::{
    are_ratio, centered_rank_moment_by_summation, centered_rank_moments_closed_form,
    exponential_b_tilde_limit, exponential_example_spec, gamma_example_spec,
    predicted_residual_covariances, run_are_curves, run_normality_check,
    run_rank_deficiency_demos, run_trace_bound, second_block_variance, three_family_spec,
    trace_bound, verify_moments, AreConfig, MomentTarget, NormalityConfig, RankDeficiencyConfig,
    RankDeficiencyExample, TraceBoundConfig, VerifyMomentsConfig,
};

/// Names accepted by [`run_by_name`].
pub const EXPERIMENTS: [&str; 10] = [
    "contaminated-normal",
    "pareto",
    "overlay",
    "are-curves",
    "contour-ratio",
    "trace-bound",
    "normality",
    "rank-deficiency",
    "mixed-membership",
    "verify-moments",
];

fn config<T: DeserializeOwned + Default>(json: Option<&str>) -> Result<T> {
    match json {
        Some(s) => Ok(serde_json::from_str(s)?),
        None => Ok(T::default()),
    }
}

/// Runs a named experiment. `config_json` overrides the default configuration and
/// must be a complete configuration object for that experiment.
pub fn run_by_name(name: &str, config_json: Option<&str>, seed: u64) -> Result<ExperimentReport> {
    match name {
        "contaminated-normal" => run_contaminated_normal(&config(config_json)?, seed),
        "pareto" => run_pareto(&config(config_json)?, seed),
        "overlay" => run_overlay(&config(config_json)?, seed),
        "are-curves" => run_are_curves(&config(config_json)?, seed),
        "contour-ratio" => run_contour_ratio(&config(config_json)?, seed),
        "trace-bound" => run_trace_bound(&config(config_json)?, seed),
        "normality" => run_normality_check(&config(config_json)?, seed),
        "rank-deficiency" => run_rank_deficiency_demos(&config(config_json)?, seed),
        "mixed-membership" => run_mixed_membership(&config(config_json)?, seed),
        "verify-moments" => verify_moments(&config(config_json)?, seed),
        _ => Err(Error::arg(format!(
            "unknown experiment {name:?}; expected one of {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}

/// Default configuration of a named experiment as JSON.
pub fn default_config_json(name: &str) -> Result<String> {
    let v = match name {
        "contaminated-normal" => serde_json::to_value(ContaminatedNormalConfig::default()),
        "pareto" => serde_json::to_value(ParetoConfig::default()),
        "overlay" => serde_json::to_value(OverlayConfig::default()),
        "are-curves" => serde_json::to_value(AreConfig::default()),
        "contour-ratio" => serde_json::to_value(ContourConfig::default()),
        "trace-bound" => serde_json::to_value(TraceBoundConfig::default()),
        "normality" => serde_json::to_value(NormalityConfig::default()),
        "rank-deficiency" => serde_json::to_value(RankDeficiencyConfig::default()),
        "mixed-membership" => serde_json::to_value(MixedMembershipConfig::default()),
        "verify-moments" => serde_json::to_value(VerifyMomentsConfig::default()),
        _ => return Err(Error::arg(format!("unknown experiment {name:?}"))),
    }?;
    Ok(serde_json::to_string_pretty(&v)?)
}
