//! Composed estimation flows: smoothness bound on the full sample, donut
//! exclusion, side fits, and honest intervals in one call.

use crate::cohort::Cohort;
use crate::error::Result;
use crate::estimators::{first_stage, sharp_rd, wald_from_fits, FuzzyResult, RdFit, WEAK_STAGE_FLOOR};
use crate::honest::{estimate_m, honest_interval, HonestSettings, SmoothnessBound};
use crate::spec::{OutcomeKey, RdSpec};

/// Sharp donut RD with an honest interval attached.
///
/// `full` is the validated cohort before donut exclusion: the smoothness
/// bound is estimated once from the full global sample, then the donut is
/// applied and the sides are fit.
pub fn sharp_with_honest(full: &Cohort, spec: &RdSpec, honest: &HonestSettings) -> Result<RdFit> {
    let m = estimate_m(full, &spec.outcome, honest)?;
    sharp_with_honest_given_m(full, spec, &m, honest.alpha)
}

/// As [`sharp_with_honest`] with a precomputed smoothness bound, for sweeps
/// and bootstrap loops that hold M fixed.
pub fn sharp_with_honest_given_m(
    full: &Cohort,
    spec: &RdSpec,
    m: &SmoothnessBound,
    alpha: f64,
) -> Result<RdFit> {
    let donut = full.apply_donut(spec)?;
    let mut fit = sharp_rd(&donut, spec)?;
    fit.honest_ci = Some(honest_interval(&fit, m, alpha)?);
    Ok(fit)
}

/// First-stage donut RD (treatment as outcome) with an honest interval.
pub fn first_stage_with_honest(full: &Cohort, spec: &RdSpec, honest: &HonestSettings) -> Result<RdFit> {
    let mut stage_spec = spec.clone();
    stage_spec.outcome = OutcomeKey::Treated;
    let m = estimate_m(full, &OutcomeKey::Treated, honest)?;
    let donut = full.apply_donut(&stage_spec)?;
    let mut fit = first_stage(&donut, &stage_spec)?;
    fit.honest_ci = Some(honest_interval(&fit, &m, honest.alpha)?);
    Ok(fit)
}

/// Fuzzy donut RD with honest intervals on the reduced form and the Wald
/// ratio (reduced-form honest CI scaled by the first stage, plus the
/// delta-method cross-check).
pub fn fuzzy_with_honest(
    full: &Cohort,
    outcome_spec: &RdSpec,
    stage_spec: &RdSpec,
    honest: &HonestSettings,
) -> Result<FuzzyResult> {
    let reduced = sharp_with_honest(full, outcome_spec, honest)?;
    let stage = first_stage_with_honest(full, stage_spec, honest)?;
    wald_from_fits(reduced, stage, WEAK_STAGE_FLOOR)
}
