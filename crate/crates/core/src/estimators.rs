//! Sharp (reduced-form) donut RD, the first-stage RD on treatment, and the
//! fuzzy Wald estimator.

use crate::cohort::{Cohort, SideSel};
use crate::error::{RdError, Result};
use crate::honest::HonestCi;
use crate::local::{fit_boundary, Side, SideFit};
use crate::spec::{OutcomeKey, RdSpec};

/// A boundary-jump estimate: difference of the two one-sided boundary fits.
#[derive(Debug, Clone, PartialEq)]
pub struct RdFit {
    /// `above.boundary_value - below.boundary_value`.
    pub jump: f64,
    /// `sqrt(se_below² + se_above²)`; the sides are fit independently.
    pub se: f64,
    pub below: SideFit,
    pub above: SideFit,
    pub honest_ci: Option<HonestCi>,
    pub spec_used: RdSpec,
}

impl RdFit {
    /// Conventional two-sided interval `jump ± z·se`.
    pub fn conventional_ci(&self, alpha: f64) -> (f64, f64) {
        let z = crate::honest::normal_quantile(1.0 - alpha / 2.0);
        (self.jump - z * self.se, self.jump + z * self.se)
    }
}

/// Reduced-form and first-stage fits plus the Wald-scaled complier effect.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyResult {
    pub reduced_form: RdFit,
    pub first_stage: RdFit,
    /// `reduced_form.jump / first_stage.jump`.
    pub wald: f64,
    /// Delta-method standard error treating the two fits as independent.
    pub se: f64,
    /// Reduced-form honest CI scaled by the first-stage estimate (primary).
    pub honest_ci: Option<(f64, f64)>,
    /// Delta-method honest CI (cross-check).
    pub honest_ci_delta: Option<(f64, f64)>,
}

/// First-stage jumps at or below this floor raise a weak-instrument error.
pub const WEAK_STAGE_FLOOR: f64 = 0.10;

/// Sharp donut RD: fit each side of the threshold with the same spec and
/// difference the boundary values. Expects the donut exclusion to have been
/// applied already (see [`crate::pipeline`] for the composed flow).
pub fn sharp_rd(cohort: &Cohort, spec: &RdSpec) -> Result<RdFit> {
    let below_data = cohort.side_data(&spec.outcome, SideSel::Below);
    let above_data = cohort.side_data(&spec.outcome, SideSel::Above);
    let below = fit_boundary(&below_data, spec, Side::Below)?;
    let above = fit_boundary(&above_data, spec, Side::Above)?;
    Ok(RdFit {
        jump: above.boundary_value - below.boundary_value,
        se: (below.se.powi(2) + above.se.powi(2)).sqrt(),
        below,
        above,
        honest_ci: None,
        spec_used: spec.clone(),
    })
}

/// First-stage RD: the sharp estimator applied to the 0/1 treatment
/// indicator, yielding the jump in enrollment probability at the threshold.
pub fn first_stage(cohort: &Cohort, spec: &RdSpec) -> Result<RdFit> {
    let mut stage_spec = spec.clone();
    stage_spec.outcome = OutcomeKey::Treated;
    sharp_rd(cohort, &stage_spec)
}

/// Combine a reduced-form fit and a first-stage fit into the Wald estimate.
///
/// Errors rather than dividing when the first stage does not exceed
/// `weak_floor`. The delta-method variance is
/// `var(rf)/fs² + rf²·var(fs)/fs⁴` with the two fits treated as independent.
pub fn wald_from_fits(reduced_form: RdFit, first_stage: RdFit, weak_floor: f64) -> Result<FuzzyResult> {
    let fs = first_stage.jump;
    if fs <= weak_floor {
        return Err(RdError::WeakFirstStage {
            jump: fs,
            floor: weak_floor,
        });
    }
    let rf = reduced_form.jump;
    let wald = rf / fs;
    let var = reduced_form.se.powi(2) / fs.powi(2) + rf.powi(2) * first_stage.se.powi(2) / fs.powi(4);
    let honest_ci = reduced_form
        .honest_ci
        .as_ref()
        .map(|ci| (ci.lower / fs, ci.upper / fs));
    let honest_ci_delta = reduced_form.honest_ci.as_ref().map(|ci| {
        let se = var.sqrt();
        if se > 0.0 {
            let t = ci.worst_case_bias / fs.abs() / se;
            let cv = crate::honest::honest_cv(t, ci.alpha);
            (wald - cv * se, wald + cv * se)
        } else {
            (wald, wald)
        }
    });
    Ok(FuzzyResult {
        reduced_form,
        first_stage,
        wald,
        se: var.sqrt(),
        honest_ci,
        honest_ci_delta,
    })
}

/// Fuzzy donut RD: reduced form on the outcome, first stage on treatment,
/// Wald ratio of the two jumps.
pub fn fuzzy_rd(cohort: &Cohort, outcome_spec: &RdSpec, stage_spec: &RdSpec) -> Result<FuzzyResult> {
    let reduced = sharp_rd(cohort, outcome_spec)?;
    let stage = first_stage(cohort, stage_spec)?;
    wald_from_fits(reduced, stage, WEAK_STAGE_FLOOR)
}
