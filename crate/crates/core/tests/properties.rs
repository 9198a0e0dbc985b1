//! Property tests for the estimator and data-model invariants.

use std::collections::BTreeMap;

use proptest::prelude::*;

use donut_rd::cohort::{compute_pdc, standardize_oop, Cohort, CsvSchema, Fill, Observation};
use donut_rd::elasticity::compute_ped;
use donut_rd::estimators::{first_stage, sharp_rd, wald_from_fits};
use donut_rd::honest::{honest_cv, honest_interval, SmoothnessBound};
use donut_rd::local::{effective_weights, fit_boundary, Side};
use donut_rd::spec::{Kernel, OutcomeKey, RdSpec, Scope};

fn obs(id: usize, age: i64, treated: bool, oop: f64, adherence: f64) -> Observation {
    Observation {
        id: format!("p{id}"),
        age,
        treated,
        oop,
        adherence,
        covariates: BTreeMap::new(),
    }
}

fn spec(order: usize, kernel: Kernel, scope: Scope) -> RdSpec {
    let mut s = RdSpec::main_analysis(OutcomeKey::Oop);
    s.order = order;
    s.kernel = kernel;
    s.scope = scope;
    s
}

/// Ages on one side of 65 with enough distinct values for a cubic, kept
/// strictly inside the kernel window (the triangular weight vanishes at the
/// bandwidth edge).
fn side_ages() -> impl Strategy<Value = Vec<i64>> {
    proptest::collection::vec(56..65i64, 8..40).prop_filter("needs 4 distinct ages", |ages| {
        let mut distinct = ages.clone();
        distinct.sort_unstable();
        distinct.dedup();
        distinct.len() >= 4
    })
}

proptest! {
    #[test]
    fn pdc_is_monotone_and_bounded(a in 0u32..400, b in 0u32..400) {
        let (lo, hi) = (a.min(b), a.max(b));
        let (p_lo, p_hi) = (compute_pdc(lo, 90), compute_pdc(hi, 90));
        prop_assert!(p_lo <= p_hi);
        prop_assert!((0.0..=1.0).contains(&p_lo) && (0.0..=1.0).contains(&p_hi));
    }

    #[test]
    fn oop_standardization_ignores_fill_order(
        pays in proptest::collection::vec((0.0f64..500.0, 0.0f64..1.0), 1..8),
        ninety in proptest::bool::ANY,
    ) {
        let fills: Vec<Fill> = pays
            .iter()
            .map(|&(pay, coupon_frac)| Fill {
                days_supplied: if ninety { 90 } else { 30 },
                patient_pay: pay,
                coupon: pay * coupon_frac,
            })
            .collect();
        let mut reversed = fills.clone();
        reversed.reverse();
        let a = standardize_oop(&fills).unwrap();
        let b = standardize_oop(&reversed).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn donut_is_idempotent(ages in proptest::collection::vec(55..75i64, 10..60), radius in 0u32..3) {
        let observations = ages
            .iter()
            .enumerate()
            .map(|(i, &age)| obs(i, age, age > 65, 10.0, 0.5))
            .collect();
        let Ok(cohort) = Cohort::from_observations(observations, 65, "prop") else {
            return Ok(());
        };
        let spec = RdSpec::main_analysis(OutcomeKey::Oop).with_donut_radius(radius);
        let Ok(once) = cohort.apply_donut(&spec) else { return Ok(()) };
        let twice = once.apply_donut(&spec).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn effective_weights_satisfy_moment_conditions(
        ages in side_ages(),
        order in 1usize..=3,
    ) {
        let xs: Vec<f64> = ages.iter().map(|&a| (a - 65) as f64).collect();
        let ws = vec![1.0; xs.len()];
        let weights = effective_weights(&xs, &ws, order, Side::Below).unwrap();
        let moment = |k: u32| -> f64 { weights.iter().zip(&xs).map(|(w, x)| w * x.powi(k as i32)).sum() };
        // tolerance relative to the moment's natural magnitude
        let scale = |k: u32| -> f64 {
            1.0 + weights
                .iter()
                .zip(&xs)
                .map(|(w, x)| (w * x.powi(k as i32)).abs())
                .sum::<f64>()
        };
        prop_assert!((moment(0) - 1.0).abs() < 1e-10 * scale(0));
        for k in 1..=order as u32 {
            prop_assert!(
                moment(k).abs() < 1e-10 * scale(k),
                "moment {} = {}",
                k,
                moment(k)
            );
        }
    }

    #[test]
    fn boundary_value_is_the_weighted_outcome_sum(
        ages in side_ages(),
        order in 1usize..=3,
        coefs in proptest::collection::vec(-5.0f64..5.0, 4),
        wiggle in -3.0f64..3.0,
    ) {
        let data: Vec<(i64, f64)> = ages
            .iter()
            .map(|&a| {
                let x = (a - 65) as f64;
                let y = coefs.iter().rev().fold(0.0, |acc, &b| acc * x + b) + wiggle * (x * 0.9).sin();
                (a, y)
            })
            .collect();
        let fit = fit_boundary(&data, &spec(order, Kernel::Triangular, Scope::Local), Side::Below).unwrap();
        let from_weights: f64 = fit
            .effective_weights
            .iter()
            .map(|w| w.weight * data[w.index].1)
            .sum();
        let scale = fit.boundary_value.abs().max(1.0);
        prop_assert!((fit.boundary_value - from_weights).abs() <= 1e-10 * scale);
    }

    #[test]
    fn polynomials_in_the_model_class_are_reproduced(
        ages in side_ages(),
        order in 1usize..=3,
        coefs in proptest::collection::vec(-10.0f64..10.0, 1..=4),
        kernel in prop_oneof![Just(Kernel::Triangular), Just(Kernel::Uniform)],
    ) {
        let degree = coefs.len() - 1;
        prop_assume!(degree <= order);
        let data: Vec<(i64, f64)> = ages
            .iter()
            .map(|&a| {
                let x = (a - 65) as f64;
                (a, coefs.iter().rev().fold(0.0, |acc, &b| acc * x + b))
            })
            .collect();
        let fit = fit_boundary(&data, &spec(order, kernel, Scope::Local), Side::Below).unwrap();
        let scale = coefs[0].abs().max(1.0);
        prop_assert!((fit.boundary_value - coefs[0]).abs() <= 1e-10 * scale);
    }

    #[test]
    fn scaling_outcomes_scales_the_fit_linearly(
        ages in side_ages(),
        k in prop_oneof![0.001f64..1000.0, Just(-3.5f64)],
    ) {
        let data: Vec<(i64, f64)> = ages
            .iter()
            .enumerate()
            .map(|(i, &a)| (a, 3.0 + 0.5 * (a - 65) as f64 + ((i * 7) % 5) as f64))
            .collect();
        let scaled: Vec<(i64, f64)> = data.iter().map(|&(a, y)| (a, k * y)).collect();
        let s = spec(1, Kernel::Triangular, Scope::Local);
        let base = fit_boundary(&data, &s, Side::Below).unwrap();
        let scaled_fit = fit_boundary(&scaled, &s, Side::Below).unwrap();
        let tol = 1e-9 * (k.abs() * base.boundary_value.abs()).max(1e-6);
        prop_assert!((scaled_fit.boundary_value - k * base.boundary_value).abs() <= tol);
        prop_assert!((scaled_fit.se - k.abs() * base.se).abs() <= 1e-9 * (k.abs() * base.se).max(1e-6));
    }

    #[test]
    fn wald_identity_holds_on_every_estimable_cohort(
        seed_ages in proptest::collection::vec(52..78i64, 60..120),
        jump in -50.0f64..50.0,
    ) {
        let observations: Vec<Observation> = seed_ages
            .iter()
            .enumerate()
            .map(|(i, &age)| {
                let treated = age > 65 && i % 5 != 0;
                let y = (100.0 + jump * f64::from(u8::from(treated)) + ((i * 13) % 7) as f64).max(0.0);
                obs(i, age, treated, y, 0.5)
            })
            .collect();
        let Ok(cohort) = Cohort::from_observations(observations, 65, "prop") else {
            return Ok(());
        };
        let spec_o = RdSpec::main_analysis(OutcomeKey::Oop);
        let spec_t = RdSpec::main_analysis(OutcomeKey::Treated);
        let Ok(donut) = cohort.apply_donut(&spec_o) else { return Ok(()) };
        let (Ok(rf), Ok(fs)) = (sharp_rd(&donut, &spec_o), first_stage(&donut, &spec_t)) else {
            return Ok(());
        };
        let Ok(fuzzy) = wald_from_fits(rf, fs, 0.10) else { return Ok(()) };
        let lhs = fuzzy.wald * fuzzy.first_stage.jump;
        let rhs = fuzzy.reduced_form.jump;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
    }

    #[test]
    fn sharp_rd_is_shift_equivariant(
        ages in proptest::collection::vec(55..75i64, 40..80),
        shift in -100.0f64..100.0,
    ) {
        let base: Vec<Observation> = ages
            .iter()
            .enumerate()
            .map(|(i, &age)| obs(i, age, age > 65, 200.0 + ((i * 11) % 9) as f64, 0.5))
            .collect();
        let shifted: Vec<Observation> = base
            .iter()
            .cloned()
            .map(|mut o| {
                o.oop += shift;
                o
            })
            .collect();
        let spec_o = RdSpec::main_analysis(OutcomeKey::Oop);
        let both = |observations: Vec<Observation>| -> Option<donut_rd::RdFit> {
            let cohort = Cohort::from_observations(observations, 65, "prop").ok()?;
            sharp_rd(&cohort.apply_donut(&spec_o).ok()?, &spec_o).ok()
        };
        let (Some(a), Some(b)) = (both(base), both(shifted)) else { return Ok(()) };
        prop_assert!((a.jump - b.jump).abs() <= 1e-9 * a.jump.abs().max(1.0));
        prop_assert!((b.below.boundary_value - a.below.boundary_value - shift).abs() <= 1e-8);
        prop_assert!((b.above.boundary_value - a.above.boundary_value - shift).abs() <= 1e-8);
    }

    #[test]
    fn honest_width_is_monotone_in_m_and_alpha(
        m in 0.0f64..5.0,
        extra in 0.01f64..5.0,
        alpha in 0.01f64..0.2,
    ) {
        let observations: Vec<Observation> = (55..75)
            .filter(|&a| a != 65)
            .flat_map(|age| {
                (0..6).map(move |k| {
                    obs(
                        (age * 10 + k) as usize,
                        age,
                        age > 65,
                        100.0 + ((age * 31 + k * 17) % 13) as f64,
                        0.5,
                    )
                })
            })
            .collect();
        let cohort = Cohort::from_observations(observations, 65, "prop").unwrap();
        let spec_o = RdSpec::main_analysis(OutcomeKey::Oop);
        let fit = sharp_rd(&cohort.apply_donut(&spec_o).unwrap(), &spec_o).unwrap();
        prop_assume!(fit.se > 0.0);

        let width = |m: f64, alpha: f64| {
            let ci = honest_interval(&fit, &SmoothnessBound::fixed(m), alpha).unwrap();
            ci.upper - ci.lower
        };
        prop_assert!(width(m + extra, alpha) >= width(m, alpha) - 1e-12);
        let tighter_alpha = alpha / 2.0;
        prop_assert!(width(m, tighter_alpha) >= width(m, alpha) - 1e-12);
    }

    #[test]
    fn honest_cv_dominates_the_normal_quantile(t in 0.0f64..20.0, alpha in 0.005f64..0.3) {
        let z = statrs_quantile(1.0 - alpha / 2.0);
        prop_assert!(honest_cv(t, alpha) >= z - 1e-9);
    }

    #[test]
    fn ped_is_scale_invariant_and_signed(
        delta_q in -0.5f64..0.5,
        q_pre in 0.05f64..1.0,
        delta_p in prop_oneof![0.01f64..500.0, -500.0f64..-0.01],
        p_pre in 1.0f64..500.0,
        k in 0.01f64..100.0,
    ) {
        let a = compute_ped(delta_q, q_pre, delta_p, p_pre).unwrap();
        let b = compute_ped(delta_q, q_pre, k * delta_p, k * p_pre).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        if delta_p > 0.0 && delta_q != 0.0 {
            prop_assert_eq!(a.signum(), delta_q.signum());
        }
    }

    #[test]
    fn csv_round_trip_is_exact(
        rows in proptest::collection::vec(
            (50i64..80, proptest::bool::ANY, 0.0f64..1e5, 0.0f64..=1.0, proptest::option::of(-50.0f64..50.0)),
            5..60,
        ),
    ) {
        let observations: Vec<Observation> = rows
            .iter()
            .enumerate()
            .map(|(i, &(age, treated, oop, adherence, charlson))| {
                let mut covariates = BTreeMap::new();
                if let Some(value) = charlson {
                    covariates.insert("charlson".to_string(), value);
                }
                Observation {
                    id: format!("p{i}"),
                    age,
                    treated,
                    oop,
                    adherence,
                    covariates,
                }
            })
            .collect();
        let Ok(cohort) = Cohort::from_observations(observations, 65, "prop") else {
            return Ok(());
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cohort.csv");
        cohort.write(&path).unwrap();
        let reloaded = Cohort::load(&path, &CsvSchema::default(), 65).unwrap();
        prop_assert_eq!(cohort.observations(), reloaded.observations());
    }
}

fn statrs_quantile(p: f64) -> f64 {
    use statrs::distribution::ContinuousCDF;
    statrs::distribution::Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}
