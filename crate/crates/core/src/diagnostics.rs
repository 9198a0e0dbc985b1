//! Robustness battery: placebo thresholds, bandwidth sweeps, covariate
//! balance at the cutoff, and global trend series for plotting.

use crate::cohort::{Cohort, SideSel};
use crate::error::{RdError, Result};
use crate::estimators::RdFit;
use crate::honest::{estimate_m, HonestSettings};
use crate::local::{polyfit, Side};
use crate::pipeline::{sharp_with_honest, sharp_with_honest_given_m};
use crate::spec::{OutcomeKey, RdSpec};

/// Placebo thresholds tested when none are configured.
pub const DEFAULT_PLACEBO_THRESHOLDS: [i64; 10] = [55, 57, 59, 61, 63, 67, 69, 71, 73, 75];

/// Default bandwidth grid for sweeps, in years.
pub fn default_bandwidth_grid() -> Vec<f64> {
    (5..=15).map(f64::from).collect()
}

/// One placebo RD at a tested threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaceboResult {
    pub threshold: i64,
    pub fit: RdFit,
    /// Honest CI excludes zero.
    pub significant: bool,
}

/// Sharp RD at each placebo threshold, with the donut applied at the tested
/// threshold and the true-threshold donut rows also removed so placebo
/// windows are not contaminated by the genuine jump. Per-threshold failures
/// are recorded, not fatal to the scan.
pub fn placebo_scan(
    full: &Cohort,
    spec: &RdSpec,
    thresholds: &[i64],
    honest: &HonestSettings,
) -> Vec<(i64, Result<PlaceboResult>)> {
    thresholds
        .iter()
        .map(|&t| (t, placebo_at(full, spec, t, honest)))
        .collect()
}

fn placebo_at(full: &Cohort, spec: &RdSpec, tested: i64, honest: &HonestSettings) -> Result<PlaceboResult> {
    let cohort = if tested == spec.threshold {
        full.clone()
    } else {
        // drop the true-threshold donut before re-keying to the placebo
        let true_donut = full.apply_donut(spec)?;
        true_donut.rethreshold(tested)?
    };
    let placebo_spec = spec.clone().with_threshold(tested);
    let fit = sharp_with_honest(&cohort, &placebo_spec, honest)?;
    let significant = fit.honest_ci.as_ref().is_some_and(|ci| ci.excludes_zero());
    Ok(PlaceboResult {
        threshold: tested,
        fit,
        significant,
    })
}

/// One fit of a bandwidth sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub bandwidth: f64,
    pub fit: RdFit,
}

/// Re-fit the same model over a bandwidth grid. The smoothness bound does
/// not depend on bandwidth, so it is estimated once and reused.
pub fn bandwidth_sweep(
    full: &Cohort,
    spec: &RdSpec,
    bandwidths: &[f64],
    honest: &HonestSettings,
) -> Result<Vec<SweepResult>> {
    for &h in bandwidths {
        if h <= f64::from(spec.donut_radius) {
            return Err(RdError::InvalidSpec(format!(
                "sweep bandwidth {h} must exceed donut radius {}",
                spec.donut_radius
            )));
        }
    }
    let m = estimate_m(full, &spec.outcome, honest)?;
    bandwidths
        .iter()
        .map(|&h| {
            let swept = spec.clone().with_bandwidth(h);
            let fit = sharp_with_honest_given_m(full, &swept, &m, honest.alpha)?;
            Ok(SweepResult { bandwidth: h, fit })
        })
        .collect()
}

/// Balance check for one covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceResult {
    pub covariate: String,
    pub fit: RdFit,
    pub significant: bool,
    /// Rows dropped because the covariate was missing.
    pub n_missing: usize,
}

/// Minimum fraction of rows on which a covariate must be present.
pub const BALANCE_COVERAGE_FLOOR: f64 = 0.95;

/// Sharp RD per covariate, treating the covariate as the outcome. Rows
/// missing a covariate are dropped for that covariate with accounting;
/// coverage below 95% is an error for that covariate.
pub fn covariate_balance(
    full: &Cohort,
    spec: &RdSpec,
    covariates: &[String],
    honest: &HonestSettings,
) -> Vec<(String, Result<BalanceResult>)> {
    covariates
        .iter()
        .map(|name| (name.clone(), balance_one(full, spec, name, honest)))
        .collect()
}

fn balance_one(full: &Cohort, spec: &RdSpec, name: &str, honest: &HonestSettings) -> Result<BalanceResult> {
    let key = OutcomeKey::Covariate(name.to_string());
    let present = full
        .observations()
        .iter()
        .filter(|o| o.covariates.contains_key(name))
        .count();
    let n_missing = full.len() - present;
    if (present as f64) < BALANCE_COVERAGE_FLOOR * full.len() as f64 {
        return Err(RdError::Data(format!(
            "covariate `{name}` present on {present}/{} rows (< {:.0}%)",
            full.len(),
            BALANCE_COVERAGE_FLOOR * 100.0
        )));
    }
    let mut balance_spec = spec.clone();
    balance_spec.outcome = key;
    let fit = sharp_with_honest(full, &balance_spec, honest)?;
    let significant = fit.honest_ci.as_ref().is_some_and(|ci| ci.excludes_zero());
    Ok(BalanceResult {
        covariate: name.to_string(),
        fit,
        significant,
        n_missing,
    })
}

/// One row of a global trend series.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendPoint {
    pub age: i64,
    pub mean: f64,
    pub n: usize,
    /// Fitted value from the side's global quadratic; `None` at the
    /// threshold itself, which belongs to neither side.
    pub fitted: Option<f64>,
}

/// Per-age outcome means plus a fitted global quadratic per side.
pub fn global_trend(cohort: &Cohort, outcome: &OutcomeKey) -> Result<Vec<TrendPoint>> {
    let c = cohort.threshold();
    let below = polyfit(&cohort.side_data(outcome, SideSel::Below), c, 2, Side::Below)?;
    let above = polyfit(&cohort.side_data(outcome, SideSel::Above), c, 2, Side::Above)?;
    let eval = |coefs: &[f64], x: f64| coefs.iter().rev().fold(0.0, |acc, &b| acc * x + b);

    let mut ages: Vec<i64> = cohort.observations().iter().map(|o| o.age).collect();
    ages.sort_unstable();
    ages.dedup();

    let mut points = Vec::with_capacity(ages.len());
    for age in ages {
        let values: Vec<f64> = cohort
            .observations()
            .iter()
            .filter(|o| o.age == age)
            .filter_map(|o| o.outcome(outcome))
            .collect();
        if values.is_empty() {
            continue;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let x = (age - c) as f64;
        let fitted = match age.cmp(&c) {
            std::cmp::Ordering::Less => Some(eval(&below, x)),
            std::cmp::Ordering::Greater => Some(eval(&above, x)),
            std::cmp::Ordering::Equal => None,
        };
        points.push(TrendPoint {
            age,
            mean,
            n: values.len(),
            fitted,
        });
    }
    Ok(points)
}
