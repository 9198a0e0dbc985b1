//! Bias-aware ("honest") confidence intervals for the donut RD with a
//! discrete running variable.
//!
//! The smoothness bound M comes from a scaled per-side global quadratic fit;
//! the worst-case bias of the boundary-jump estimator over the class of
//! conditional means with `|f''| <= M` on each side is
//! `B = (M/2) · Σᵢ |wᵢ| (xᵢ-c)²` summed over both sides' effective weights;
//! and the critical value is the folded-normal quantile, the smallest `cv`
//! with `P(|Z + t| <= cv) >= 1 - α` at the bias-to-se ratio `t = B/se`.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::cohort::{Cohort, SideSel};
use crate::error::{RdError, Result};
use crate::estimators::RdFit;
use crate::local::{polyfit, EffectiveWeight, Side};
use crate::spec::OutcomeKey;

/// How the "coefficient from a quadratic global regression" maps to a bound
/// on the second derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MInterpretation {
    /// The quadratic coefficient implies `f'' = 2β₂` (default).
    SecondDerivative,
    /// Use `β₂` itself as the curvature measure.
    RawCoefficient,
}

/// Settings for honest-interval construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HonestSettings {
    /// Multiplier on the fitted curvature; the paper's default is 4 with
    /// sensitivity values 2 and 6.
    pub scale_factor: f64,
    pub alpha: f64,
    pub interpretation: MInterpretation,
}

impl Default for HonestSettings {
    fn default() -> Self {
        HonestSettings {
            scale_factor: 4.0,
            alpha: 0.05,
            interpretation: MInterpretation::SecondDerivative,
        }
    }
}

/// Bound on the second derivative of the conditional mean, per side fits.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessBound {
    /// Outcome units per year².
    pub m: f64,
    pub scale_factor: f64,
    /// Global quadratic coefficients (intercept first) for each side.
    pub below_coefficients: Vec<f64>,
    pub above_coefficients: Vec<f64>,
}

impl SmoothnessBound {
    /// A fixed bound, for tests and for forcing conventional inference (m = 0).
    pub fn fixed(m: f64) -> Self {
        SmoothnessBound {
            m,
            scale_factor: 1.0,
            below_coefficients: Vec::new(),
            above_coefficients: Vec::new(),
        }
    }
}

/// Honest confidence interval and the quantities behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct HonestCi {
    pub lower: f64,
    pub upper: f64,
    pub worst_case_bias: f64,
    /// Bias-to-se ratio the critical value was solved at.
    pub t_ratio: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub m: f64,
    pub scale_factor: f64,
}

impl HonestCi {
    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Estimate the smoothness bound from unweighted global quadratic fits on
/// each side of the threshold, on the full (pre-donut) sample.
pub fn estimate_m(
    cohort: &Cohort,
    outcome: &OutcomeKey,
    settings: &HonestSettings,
) -> Result<SmoothnessBound> {
    let below = polyfit(
        &cohort.side_data(outcome, SideSel::Below),
        cohort.threshold(),
        2,
        Side::Below,
    )?;
    let above = polyfit(
        &cohort.side_data(outcome, SideSel::Above),
        cohort.threshold(),
        2,
        Side::Above,
    )?;
    let curvature = |coefs: &[f64]| {
        // quadratic coefficients of exactly linear data sit at solver noise
        let scale = coefs.iter().fold(0.0f64, |acc, &b| acc.max(b.abs()));
        let beta2 = coefs[2].abs();
        let beta2 = if beta2 <= 1e-12 * scale { 0.0 } else { beta2 };
        match settings.interpretation {
            MInterpretation::SecondDerivative => 2.0 * beta2,
            MInterpretation::RawCoefficient => beta2,
        }
    };
    let m = settings.scale_factor * curvature(&below).max(curvature(&above));
    Ok(SmoothnessBound {
        m,
        scale_factor: settings.scale_factor,
        below_coefficients: below,
        above_coefficients: above,
    })
}

/// Worst-case bias of the jump estimator over the Taylor class `|f''| <= m`
/// on each side: `(m/2) · Σ |wᵢ| (xᵢ-c)²` over both weight sets.
pub fn worst_case_bias(below: &[EffectiveWeight], above: &[EffectiveWeight], m: f64) -> f64 {
    let sum: f64 = below
        .iter()
        .chain(above)
        .map(|w| w.weight.abs() * w.centered_age.powi(2))
        .sum();
    0.5 * m * sum
}

/// Smallest `cv` such that `P(|Z + t| <= cv) >= 1 - alpha`, by bisection on
/// the folded-normal CDF to 1e-6.
pub fn honest_cv(t: f64, alpha: f64) -> f64 {
    assert!(t >= 0.0, "bias-to-se ratio must be non-negative");
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0, 1)");
    // Beyond t ≈ 30 the lower tail is zero to double precision and the
    // one-sided asymptote is exact.
    if t >= 30.0 {
        return t + normal_quantile(1.0 - alpha);
    }
    let target = 1.0 - alpha;
    let coverage = |c: f64| normal_cdf(c - t) - normal_cdf(-c - t);

    let mut lo = normal_quantile(1.0 - alpha / 2.0);
    if coverage(lo) >= target {
        return lo;
    }
    let mut hi = t + normal_quantile(1.0 - alpha);
    while coverage(hi) < target {
        hi += 0.5;
    }
    for _ in 0..200 {
        if hi - lo <= 1e-8 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if coverage(mid) - target < -1e-6 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Honest interval for a boundary-jump fit: widen the conventional interval
/// by the folded-normal critical value at `t = worst_case_bias / se`.
pub fn honest_interval(fit: &RdFit, m: &SmoothnessBound, alpha: f64) -> Result<HonestCi> {
    let bias = worst_case_bias(&fit.below.effective_weights, &fit.above.effective_weights, m.m);
    let t_ratio = if fit.se > 0.0 {
        bias / fit.se
    } else if bias > 0.0 {
        return Err(RdError::DegenerateInference { bias });
    } else {
        0.0
    };
    let critical_value = honest_cv(t_ratio, alpha);
    Ok(HonestCi {
        lower: fit.jump - critical_value * fit.se,
        upper: fit.jump + critical_value * fit.se,
        worst_case_bias: bias,
        t_ratio,
        critical_value,
        alpha,
        m: m.m,
        scale_factor: m.scale_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::Observation;
    use crate::estimators::sharp_rd;
    use crate::spec::RdSpec;
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn cohort_with_outcome(f: impl Fn(i64) -> f64) -> Cohort {
        let observations = (50..=80)
            .filter(|&a| a != 65)
            .map(|age| Observation {
                id: format!("p{age}"),
                age,
                treated: age > 65,
                oop: f(age).max(0.0),
                adherence: 0.5,
                covariates: BTreeMap::new(),
            })
            .collect();
        Cohort::from_observations(observations, 65, "test").unwrap()
    }

    #[test]
    fn quadratic_outcome_yields_m_eight_at_scale_four() {
        // y = (x-c)^2 on both sides: beta2 = 1, f'' = 2, m = 4 * 2 = 8
        let cohort = cohort_with_outcome(|a| ((a - 65) as f64).powi(2));
        let m = estimate_m(&cohort, &OutcomeKey::Oop, &HonestSettings::default()).unwrap();
        assert_abs_diff_eq!(m.m, 8.0, epsilon = 1e-8);
        // raw-coefficient interpretation halves it
        let raw = estimate_m(
            &cohort,
            &OutcomeKey::Oop,
            &HonestSettings {
                interpretation: MInterpretation::RawCoefficient,
                ..HonestSettings::default()
            },
        )
        .unwrap();
        assert_abs_diff_eq!(raw.m, 4.0, epsilon = 1e-8);
    }

    #[test]
    fn linear_outcome_has_zero_curvature() {
        let cohort = cohort_with_outcome(|a| 100.0 + 2.0 * (a - 65) as f64);
        let m = estimate_m(&cohort, &OutcomeKey::Oop, &HonestSettings::default()).unwrap();
        assert_abs_diff_eq!(m.m, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn scale_factor_is_linear_in_m() {
        let cohort = cohort_with_outcome(|a| ((a - 65) as f64).powi(2) * 0.5);
        let at = |scale: f64| {
            estimate_m(
                &cohort,
                &OutcomeKey::Oop,
                &HonestSettings {
                    scale_factor: scale,
                    ..HonestSettings::default()
                },
            )
            .unwrap()
            .m
        };
        let (m2, m4, m6) = (at(2.0), at(4.0), at(6.0));
        assert_abs_diff_eq!(m4 / m2, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(m6 / m2, 3.0, epsilon = 1e-10);
    }

    #[test]
    fn worst_case_bias_hand_example() {
        let below = vec![
            EffectiveWeight { index: 0, centered_age: 1.0, weight: 0.5 },
            EffectiveWeight { index: 1, centered_age: 2.0, weight: 0.5 },
        ];
        let b = worst_case_bias(&below, &[], 2.0);
        assert_abs_diff_eq!(b, 2.5, epsilon = 1e-12);
        // linear in m
        assert_abs_diff_eq!(worst_case_bias(&below, &[], 4.0), 5.0, epsilon = 1e-12);
        // zero bound collapses the bias
        assert_abs_diff_eq!(worst_case_bias(&below, &[], 0.0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn worst_case_bias_is_side_symmetric() {
        let a = vec![
            EffectiveWeight { index: 0, centered_age: -1.0, weight: 0.7 },
            EffectiveWeight { index: 1, centered_age: -2.0, weight: 0.3 },
        ];
        let b = vec![
            EffectiveWeight { index: 0, centered_age: 1.0, weight: 0.7 },
            EffectiveWeight { index: 1, centered_age: 2.0, weight: 0.3 },
        ];
        assert_abs_diff_eq!(
            worst_case_bias(&a, &b, 1.3),
            worst_case_bias(&b, &a, 1.3),
            epsilon = 1e-12
        );
    }

    #[test]
    fn honest_cv_examples() {
        assert_abs_diff_eq!(honest_cv(0.0, 0.05), 1.959964, epsilon = 1e-4);
        // independent grid-search oracle at t = 1
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut expected = f64::NAN;
        let mut c = 1.9;
        while c < 4.0 {
            if normal.cdf(c - 1.0) - normal.cdf(-c - 1.0) >= 0.95 {
                expected = c;
                break;
            }
            c += 1e-6;
        }
        assert_abs_diff_eq!(honest_cv(1.0, 0.05), expected, epsilon = 1e-4);
        assert!((honest_cv(1.0, 0.05) - 2.65).abs() < 0.01);
        // large-t one-sided asymptote: t + z_{0.95}
        assert_abs_diff_eq!(honest_cv(10.0, 0.05), 10.0 + 1.6449, epsilon = 1e-3);
    }

    #[test]
    fn honest_cv_is_strictly_increasing_and_bounded_below() {
        let z = normal_quantile(0.975);
        let mut prev = honest_cv(0.0, 0.05);
        assert!(prev >= z - 1e-9);
        let mut t = 0.25;
        while t <= 10.0 {
            let cv = honest_cv(t, 0.05);
            assert!(cv > prev, "cv not increasing at t = {t}");
            assert!(cv >= z - 1e-9);
            prev = cv;
            t += 0.25;
        }
    }

    #[test]
    fn zero_bound_reduces_to_conventional() {
        let cohort = cohort_with_outcome(|a| {
            let x = (a - 65) as f64;
            if a > 65 { 140.0 + x } else { 60.0 + x + (x * 0.17).sin() }
        });
        let spec = RdSpec::main_analysis(OutcomeKey::Oop);
        let donut = cohort.apply_donut(&spec).unwrap();
        let fit = sharp_rd(&donut, &spec).unwrap();
        let ci = honest_interval(&fit, &SmoothnessBound::fixed(0.0), 0.05).unwrap();
        let (lo, hi) = fit.conventional_ci(0.05);
        assert_abs_diff_eq!(ci.lower, lo, epsilon = 1e-9);
        assert_abs_diff_eq!(ci.upper, hi, epsilon = 1e-9);
    }

    #[test]
    fn doubling_m_strictly_widens() {
        let cohort = cohort_with_outcome(|a| {
            let x = (a - 65) as f64;
            if a > 65 { 140.0 + x } else { 60.0 + x + (x * 0.17).sin() }
        });
        let spec = RdSpec::main_analysis(OutcomeKey::Oop);
        let donut = cohort.apply_donut(&spec).unwrap();
        let fit = sharp_rd(&donut, &spec).unwrap();
        let narrow = honest_interval(&fit, &SmoothnessBound::fixed(1.0), 0.05).unwrap();
        let wide = honest_interval(&fit, &SmoothnessBound::fixed(2.0), 0.05).unwrap();
        assert!(wide.upper - wide.lower > narrow.upper - narrow.lower);
        // contains the point estimate
        assert!(narrow.lower <= fit.jump && fit.jump <= narrow.upper);
    }

    #[test]
    fn zero_se_with_bias_is_degenerate() {
        // exact linear data: se = 0
        let cohort = cohort_with_outcome(|a| 10.0 + 0.5 * (a - 65) as f64);
        let spec = RdSpec::main_analysis(OutcomeKey::Oop);
        let donut = cohort.apply_donut(&spec).unwrap();
        let fit = sharp_rd(&donut, &spec).unwrap();
        match honest_interval(&fit, &SmoothnessBound::fixed(1.0), 0.05) {
            Err(RdError::DegenerateInference { .. }) => {}
            other => panic!("expected degenerate inference, got {other:?}"),
        }
        // with m = 0 the interval degenerates to the point
        let ci = honest_interval(&fit, &SmoothnessBound::fixed(0.0), 0.05).unwrap();
        assert_abs_diff_eq!(ci.lower, fit.jump, epsilon = 1e-12);
        assert_abs_diff_eq!(ci.upper, fit.jump, epsilon = 1e-12);
    }
}
