//! Price elasticity of demand from paired fuzzy RD results, baselines just
//! below the threshold, and bootstrap percentile intervals for the ratio.

use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, SideSel};
use crate::error::{RdError, Result};
use crate::estimators::{first_stage, sharp_rd, wald_from_fits};
use crate::parallel::map_indexed;
use crate::rng::stream_rng;
use crate::spec::{OutcomeKey, RdSpec};

/// How the pre-threshold baselines `Q_pre` and `P_pre` are measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum BaselineMode {
    /// Left boundary values of the below-side fits (default; consistent with
    /// the RD limits at the threshold).
    Boundary,
    /// Raw means over ages in `[c - width, c)`, excluding the donut.
    Window { width: f64 },
}

impl Default for BaselineMode {
    fn default() -> Self {
        BaselineMode::Boundary
    }
}

/// Elasticity estimation settings: the three model specs, baseline mode, and
/// bootstrap controls.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticitySettings {
    pub oop_spec: RdSpec,
    pub adherence_spec: RdSpec,
    pub stage_spec: RdSpec,
    pub baseline_mode: BaselineMode,
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
    pub weak_floor: f64,
}

impl ElasticitySettings {
    pub fn new(seed: u64) -> Self {
        ElasticitySettings {
            oop_spec: RdSpec::main_analysis(OutcomeKey::Oop),
            adherence_spec: RdSpec::main_analysis(OutcomeKey::Adherence),
            stage_spec: RdSpec::main_analysis(OutcomeKey::Treated),
            baseline_mode: BaselineMode::Boundary,
            replicates: DEFAULT_REPLICATES,
            seed,
            alpha: 0.05,
            weak_floor: crate::estimators::WEAK_STAGE_FLOOR,
        }
    }
}

pub const DEFAULT_REPLICATES: usize = 1999;

/// Replicate failure ceiling: above this fraction the bootstrap errors out.
pub const MAX_FAILED_FRACTION: f64 = 0.20;

/// Elasticity point estimate with bootstrap CI and the baselines it used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PedResult {
    pub ped: f64,
    pub q_pre: f64,
    pub p_pre: f64,
    /// Adherence change at the threshold (fuzzy jump).
    pub delta_q: f64,
    /// OOP change at the threshold (fuzzy jump, USD).
    pub delta_p: f64,
    /// Percentile bootstrap interval at the configured level.
    pub ci: (f64, f64),
    pub replicates: usize,
    pub failed_replicates: usize,
    pub seed: u64,
}

/// `(%Δ quantity) / (%Δ price)`.
///
/// A price change at solver-noise level relative to the baseline counts as
/// zero and is rejected as undefined.
pub fn compute_ped(delta_q: f64, q_pre: f64, delta_p: f64, p_pre: f64) -> Result<f64> {
    if q_pre <= 0.0 {
        return Err(RdError::DegenerateBaseline(format!(
            "q_pre must be positive (got {q_pre})"
        )));
    }
    if p_pre <= 0.0 {
        return Err(RdError::DegenerateBaseline(format!(
            "p_pre must be positive (got {p_pre})"
        )));
    }
    if delta_p.abs() <= 1e-12 * p_pre {
        return Err(RdError::UndefinedElasticity);
    }
    Ok((delta_q / q_pre) / (delta_p / p_pre))
}

/// Baselines `(q_pre, p_pre)` just below the threshold.
///
/// In boundary mode these are the below-side boundary values of the
/// adherence and OOP fits; in window mode, raw means over `[c - w, c)`
/// excluding the donut. Errors if either baseline is non-positive.
pub fn baselines(
    donut_cohort: &Cohort,
    adherence_spec: &RdSpec,
    oop_spec: &RdSpec,
    mode: BaselineMode,
) -> Result<(f64, f64)> {
    let (q_pre, p_pre) = match mode {
        BaselineMode::Boundary => {
            let adh = crate::local::fit_boundary(
                &donut_cohort.side_data(&OutcomeKey::Adherence, SideSel::Below),
                adherence_spec,
                crate::local::Side::Below,
            )?;
            let oop = crate::local::fit_boundary(
                &donut_cohort.side_data(&OutcomeKey::Oop, SideSel::Below),
                oop_spec,
                crate::local::Side::Below,
            )?;
            (adh.boundary_value, oop.boundary_value)
        }
        BaselineMode::Window { width } => {
            let mean_over = |key: &OutcomeKey| -> Result<f64> {
                let c = donut_cohort.threshold();
                let values: Vec<f64> = donut_cohort
                    .side_data(key, SideSel::Below)
                    .into_iter()
                    .filter(|&(age, _)| (age as f64) >= c as f64 - width)
                    .map(|(_, y)| y)
                    .collect();
                if values.is_empty() {
                    return Err(RdError::DegenerateBaseline(format!(
                        "no observations in the baseline window [{}, {c})",
                        c as f64 - width
                    )));
                }
                Ok(values.iter().sum::<f64>() / values.len() as f64)
            };
            (mean_over(&OutcomeKey::Adherence)?, mean_over(&OutcomeKey::Oop)?)
        }
    };
    if q_pre <= 0.0 || p_pre <= 0.0 {
        return Err(RdError::DegenerateBaseline(format!(
            "non-positive baseline (q_pre = {q_pre}, p_pre = {p_pre})"
        )));
    }
    Ok((q_pre, p_pre))
}

struct PedPoint {
    ped: f64,
    q_pre: f64,
    p_pre: f64,
    delta_q: f64,
    delta_p: f64,
}

/// One full pipeline pass: donut, first stage, both reduced forms, Wald
/// ratios, baselines, PED. Honest intervals are not needed for the
/// percentile bootstrap and are skipped here.
fn ped_point(full: &Cohort, settings: &ElasticitySettings) -> Result<PedPoint> {
    let donut = full.apply_donut(&settings.oop_spec)?;
    let stage = first_stage(&donut, &settings.stage_spec)?;
    let oop_rf = sharp_rd(&donut, &settings.oop_spec)?;
    let adh_rf = sharp_rd(&donut, &settings.adherence_spec)?;

    let (q_pre, p_pre) = baselines(
        &donut,
        &settings.adherence_spec,
        &settings.oop_spec,
        settings.baseline_mode,
    )?;

    let oop_fuzzy = wald_from_fits(oop_rf, stage.clone(), settings.weak_floor)?;
    let adh_fuzzy = wald_from_fits(adh_rf, stage, settings.weak_floor)?;

    let delta_q = adh_fuzzy.wald;
    let delta_p = oop_fuzzy.wald;
    let ped = compute_ped(delta_q, q_pre, delta_p, p_pre)?;
    Ok(PedPoint {
        ped,
        q_pre,
        p_pre,
        delta_q,
        delta_p,
    })
}

/// Patient-level bootstrap of the full elasticity pipeline.
///
/// Resamples whole rows with replacement, reruns donut → fits → fuzzy →
/// baselines → PED per replicate on a deterministic per-replicate RNG
/// stream, and returns the percentile interval. Replicates where the
/// pipeline errors (weak stage, degenerate baseline, lost side) are dropped
/// and counted; more than 20% failures aborts. Bit-reproducible for a fixed
/// seed and replicate count, independent of thread count.
pub fn bootstrap_ped(full: &Cohort, settings: &ElasticitySettings) -> Result<PedResult> {
    if settings.replicates < 200 {
        return Err(RdError::InvalidSpec(format!(
            "bootstrap needs at least 200 replicates (got {})",
            settings.replicates
        )));
    }
    let point = ped_point(full, settings)?;

    let draws: Vec<Option<f64>> = map_indexed(settings.replicates, |i| {
        let mut rng = stream_rng(settings.seed, i as u64);
        let resampled = full.resample(&mut rng);
        ped_point(&resampled, settings).ok().map(|p| p.ped)
    });

    let mut peds: Vec<f64> = draws.iter().filter_map(|d| *d).collect();
    let failed = settings.replicates - peds.len();
    if (failed as f64) > MAX_FAILED_FRACTION * settings.replicates as f64 {
        return Err(RdError::UnstableBootstrap {
            failed,
            total: settings.replicates,
            ceiling: MAX_FAILED_FRACTION * 100.0,
        });
    }
    peds.sort_by(|a, b| a.total_cmp(b));
    let ci = percentile_interval(&peds, settings.alpha);

    Ok(PedResult {
        ped: point.ped,
        q_pre: point.q_pre,
        p_pre: point.p_pre,
        delta_q: point.delta_q,
        delta_p: point.delta_p,
        ci,
        replicates: settings.replicates,
        failed_replicates: failed,
        seed: settings.seed,
    })
}

/// Percentile interval over sorted draws: order statistics at ranks
/// `floor(α/2·m)` and `ceil((1-α/2)·m) - 1`.
fn percentile_interval(sorted: &[f64], alpha: f64) -> (f64, f64) {
    let m = sorted.len();
    debug_assert!(m > 0);
    let lo_idx = ((alpha / 2.0) * m as f64).floor() as usize;
    let hi_idx = (((1.0 - alpha / 2.0) * m as f64).ceil() as usize)
        .saturating_sub(1)
        .min(m - 1);
    (sorted[lo_idx.min(m - 1)], sorted[hi_idx])
}
