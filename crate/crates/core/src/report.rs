//! Compact serializable views of estimation results for JSON reports.
//!
//! The full fit types carry per-observation effective weights; these views
//! keep only what a report consumer needs.

use serde::{Deserialize, Serialize};

use crate::estimators::{FuzzyResult, RdFit};
use crate::honest::HonestCi;
use crate::spec::RdSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HonestCiReport {
    pub lower: f64,
    pub upper: f64,
    pub m: f64,
    pub scale_factor: f64,
    pub worst_case_bias: f64,
    pub t_ratio: f64,
    pub critical_value: f64,
    pub alpha: f64,
}

impl From<&HonestCi> for HonestCiReport {
    fn from(ci: &HonestCi) -> Self {
        HonestCiReport {
            lower: ci.lower,
            upper: ci.upper,
            m: ci.m,
            scale_factor: ci.scale_factor,
            worst_case_bias: ci.worst_case_bias,
            t_ratio: ci.t_ratio,
            critical_value: ci.critical_value,
            alpha: ci.alpha,
        }
    }
}

/// One boundary-jump estimate as reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimate: f64,
    pub se: f64,
    pub conventional_ci: (f64, f64),
    pub honest_ci: Option<HonestCiReport>,
    pub n_below: usize,
    pub n_above: usize,
    pub spec: RdSpec,
}

impl FitReport {
    pub fn from_fit(fit: &RdFit, alpha: f64) -> Self {
        FitReport {
            estimate: fit.jump,
            se: fit.se,
            conventional_ci: fit.conventional_ci(alpha),
            honest_ci: fit.honest_ci.as_ref().map(HonestCiReport::from),
            n_below: fit.below.n_used,
            n_above: fit.above.n_used,
            spec: fit.spec_used.clone(),
        }
    }
}

/// Wald estimate as reported, with both honest constructions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyReport {
    pub estimate: f64,
    pub se: f64,
    pub conventional_ci: (f64, f64),
    /// Reduced-form honest CI scaled by the first stage (primary).
    pub honest_ci: Option<(f64, f64)>,
    /// Delta-method honest CI (cross-check).
    pub honest_ci_delta: Option<(f64, f64)>,
    pub reduced_form: FitReport,
    pub first_stage: FitReport,
}

impl FuzzyReport {
    pub fn from_result(fuzzy: &FuzzyResult, alpha: f64) -> Self {
        let z = crate::honest::normal_quantile(1.0 - alpha / 2.0);
        FuzzyReport {
            estimate: fuzzy.wald,
            se: fuzzy.se,
            conventional_ci: (fuzzy.wald - z * fuzzy.se, fuzzy.wald + z * fuzzy.se),
            honest_ci: fuzzy.honest_ci,
            honest_ci_delta: fuzzy.honest_ci_delta,
            reduced_form: FitReport::from_fit(&fuzzy.reduced_form, alpha),
            first_stage: FitReport::from_fit(&fuzzy.first_stage, alpha),
        }
    }
}
