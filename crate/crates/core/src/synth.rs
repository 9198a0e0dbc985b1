//! Synthetic claims-cohort generator and Monte Carlo harness.
//!
//! The generator realizes a fuzzy-design data-generating process with known
//! estimands: treatment is probabilistic on each side of the threshold, and
//! the complier effect is added to every treated unit, so the boundary jump
//! identifies `complier_jump × (p_above - p_below)` and the Wald ratio
//! recovers `complier_jump`. [`true_estimands`] returns the closed forms the
//! recovery and coverage tests check against.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_distr::{LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Observation};
use crate::error::{RdError, Result};
use crate::estimators::{wald_from_fits, WEAK_STAGE_FLOOR};
use crate::honest::HonestSettings;
use crate::parallel::map_indexed;
use crate::pipeline::{first_stage_with_honest, sharp_with_honest};
use crate::rng::stream_rng;
use crate::spec::{OutcomeKey, RdSpec};

/// Treatment probability on each side of the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compliance {
    /// Early qualifiers below the threshold.
    pub p_below: f64,
    pub p_above: f64,
}

/// Noise attached to an outcome draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum NoiseModel {
    None,
    Gaussian { sd: f64 },
    /// Multiplicative mean-one log-normal factor with coefficient of
    /// variation `cv`; right-skewed like claims costs and never negative.
    LogNormalFactor { cv: f64 },
}

/// Data-generating model for one outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    /// Baseline polynomial in centered age, below side (intercept first).
    pub below: Vec<f64>,
    /// Baseline polynomial in centered age, at and above the threshold.
    pub above: Vec<f64>,
    /// Effect added for treated units; the Wald estimand.
    pub complier_jump: f64,
    pub noise: NoiseModel,
    pub clamp_min: Option<f64>,
    pub clamp_max: Option<f64>,
}

impl OutcomeModel {
    fn baseline(&self, x: f64, above: bool) -> f64 {
        let coefs = if above { &self.above } else { &self.below };
        coefs.iter().rev().fold(0.0, |acc, &b| acc * x + b)
    }
}

/// Smooth-in-age covariate generators for balance checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateModel {
    pub name: String,
    pub kind: CovariateKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CovariateKind {
    /// 0/1 indicator with `P(1) = base + slope·(age - c)`, clamped to [0, 1].
    Binary { base: f64, slope: f64 },
    /// Polynomial mean in centered age plus Gaussian noise.
    Continuous {
        poly: Vec<f64>,
        noise_sd: f64,
        min: Option<f64>,
        round: bool,
    },
    /// Uniform integer, independent of age.
    UniformInt { lo: i64, hi: i64 },
}

/// Full simulator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortParams {
    pub n: usize,
    pub age_range: (i64, i64),
    /// Per-age sampling weights over `age_range`; `None` is uniform.
    pub age_weights: Option<Vec<f64>>,
    pub threshold: i64,
    pub compliance: Compliance,
    pub oop: OutcomeModel,
    pub adherence: OutcomeModel,
    pub covariates: Vec<CovariateModel>,
    pub seed: u64,
}

impl CohortParams {
    /// Calibration matching the published scale of the application: n = 1416
    /// over ages 50-80, first stage 0.20 → 0.78, OOP complier jump +$232 on
    /// a below-boundary mean of $66, adherence complier jump -0.063 on a
    /// below-boundary mean of 0.90. The baselines are implementer-chosen to
    /// reproduce the implied p_pre/q_pre ratio; they are calibration, not
    /// ground truth.
    pub fn paper_calibration(seed: u64) -> Self {
        CohortParams {
            n: 1416,
            age_range: (50, 80),
            age_weights: None,
            threshold: 65,
            compliance: Compliance {
                p_below: 0.20,
                p_above: 0.78,
            },
            oop: OutcomeModel {
                below: vec![19.6, 0.3, 0.005],
                above: vec![19.6, 0.3, 0.005],
                complier_jump: 232.0,
                noise: NoiseModel::LogNormalFactor { cv: 0.6 },
                clamp_min: Some(0.0),
                clamp_max: None,
            },
            adherence: OutcomeModel {
                below: vec![0.9126],
                above: vec![0.9126],
                complier_jump: -0.063,
                noise: NoiseModel::Gaussian { sd: 0.05 },
                clamp_min: Some(0.0),
                clamp_max: Some(1.0),
            },
            covariates: vec![
                CovariateModel {
                    name: "sex".into(),
                    kind: CovariateKind::Binary {
                        base: 0.5,
                        slope: 0.003,
                    },
                },
                CovariateModel {
                    name: "charlson".into(),
                    kind: CovariateKind::Continuous {
                        poly: vec![1.8, 0.04],
                        noise_sd: 1.1,
                        min: Some(0.0),
                        round: true,
                    },
                },
                CovariateModel {
                    name: "prior_oop_30d".into(),
                    kind: CovariateKind::Continuous {
                        poly: vec![45.0, 0.8],
                        noise_sd: 30.0,
                        min: Some(0.0),
                        round: false,
                    },
                },
                CovariateModel {
                    name: "dx_year".into(),
                    kind: CovariateKind::UniformInt { lo: 2011, hi: 2015 },
                },
                CovariateModel {
                    name: "dx_month".into(),
                    kind: CovariateKind::UniformInt { lo: 1, hi: 12 },
                },
            ],
            seed,
        }
    }

    /// Paper calibration with both outcome jumps removed: the null DGP for
    /// placebo and balance studies.
    pub fn null_effects(seed: u64) -> Self {
        let mut params = Self::paper_calibration(seed);
        params.oop.complier_jump = 0.0;
        params.adherence.complier_jump = 0.0;
        params
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(RdError::InvalidSpec("simulated n must be positive".into()));
        }
        let (lo, hi) = self.age_range;
        if lo >= hi || self.threshold <= lo || self.threshold >= hi {
            return Err(RdError::InvalidSpec(format!(
                "threshold {} must lie strictly inside the age range [{lo}, {hi}]",
                self.threshold
            )));
        }
        let c = self.compliance;
        if !(0.0..=1.0).contains(&c.p_below) || !(0.0..=1.0).contains(&c.p_above) || c.p_below >= c.p_above
        {
            return Err(RdError::InvalidSpec(format!(
                "compliance must satisfy 0 <= p_below < p_above <= 1 (got {} and {})",
                c.p_below, c.p_above
            )));
        }
        if let Some(w) = &self.age_weights {
            let span = (hi - lo + 1) as usize;
            if w.len() != span {
                return Err(RdError::InvalidSpec(format!(
                    "age_weights length {} does not match the {span} ages in range",
                    w.len()
                )));
            }
            if w.iter().any(|&x| x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(RdError::InvalidSpec("age_weights must be non-negative with positive sum".into()));
            }
        }
        Ok(())
    }
}

/// Clamp accounting from one simulated cohort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimStats {
    pub n: usize,
    pub clamped_oop: usize,
    pub clamped_adherence: usize,
}

impl SimStats {
    pub fn clamped_oop_fraction(&self) -> f64 {
        self.clamped_oop as f64 / self.n as f64
    }
    pub fn clamped_adherence_fraction(&self) -> f64 {
        self.clamped_adherence as f64 / self.n as f64
    }
}

/// Draw a cohort from the configured process; byte-identical for a fixed
/// seed.
pub fn simulate_cohort(params: &CohortParams) -> Result<Cohort> {
    simulate_cohort_with_stats(params).map(|(cohort, _)| cohort)
}

/// As [`simulate_cohort`], also returning clamp accounting.
pub fn simulate_cohort_with_stats(params: &CohortParams) -> Result<(Cohort, SimStats)> {
    params.validate()?;
    let mut rng = stream_rng(params.seed, 0);
    simulate_with_rng(params, &mut rng)
}

pub(crate) fn simulate_with_rng<R: Rng>(params: &CohortParams, rng: &mut R) -> Result<(Cohort, SimStats)> {
    let (lo, hi) = params.age_range;
    let age_dist = match &params.age_weights {
        Some(w) => Some(WeightedIndex::new(w).map_err(|e| RdError::InvalidSpec(e.to_string()))?),
        None => None,
    };

    let mut stats = SimStats {
        n: params.n,
        clamped_oop: 0,
        clamped_adherence: 0,
    };
    let mut observations = Vec::with_capacity(params.n);
    for i in 0..params.n {
        let age = match &age_dist {
            Some(dist) => lo + dist.sample(rng) as i64,
            None => rng.gen_range(lo..=hi),
        };
        let above = age >= params.threshold;
        let p_treated = if above {
            params.compliance.p_above
        } else {
            params.compliance.p_below
        };
        let treated = rng.gen_bool(p_treated);
        let x = (age - params.threshold) as f64;

        let oop = draw_outcome(&params.oop, x, above, treated, rng, &mut stats.clamped_oop)?;
        let adherence = draw_outcome(
            &params.adherence,
            x,
            above,
            treated,
            rng,
            &mut stats.clamped_adherence,
        )?;

        let mut covariates = std::collections::BTreeMap::new();
        for model in &params.covariates {
            covariates.insert(model.name.clone(), draw_covariate(&model.kind, x, rng));
        }

        observations.push(Observation {
            id: format!("s{i:06}"),
            age,
            treated,
            oop,
            adherence,
            covariates,
        });
    }

    let half = params.n / 2;
    if stats.clamped_oop > half || stats.clamped_adherence > half {
        return Err(RdError::Calibration(format!(
            "more than half of the draws were clamped (oop {}, adherence {} of {})",
            stats.clamped_oop, stats.clamped_adherence, params.n
        )));
    }

    let cohort = Cohort::from_observations(observations, params.threshold, "simulated")?;
    Ok((cohort, stats))
}

fn draw_outcome<R: Rng>(
    model: &OutcomeModel,
    x: f64,
    above: bool,
    treated: bool,
    rng: &mut R,
    clamped: &mut usize,
) -> Result<f64> {
    let level = model.baseline(x, above) + if treated { model.complier_jump } else { 0.0 };
    let raw = match model.noise {
        NoiseModel::None => level,
        NoiseModel::Gaussian { sd } => {
            let noise = Normal::new(0.0, sd).map_err(|e| RdError::Calibration(e.to_string()))?;
            level + noise.sample(rng)
        }
        NoiseModel::LogNormalFactor { cv } => {
            if level < 0.0 {
                return Err(RdError::Calibration(format!(
                    "log-normal factor noise needs a non-negative level (got {level} at x = {x})"
                )));
            }
            let sigma2 = (1.0 + cv * cv).ln();
            let factor = LogNormal::new(-sigma2 / 2.0, sigma2.sqrt())
                .map_err(|e| RdError::Calibration(e.to_string()))?;
            level * factor.sample(rng)
        }
    };
    let mut value = raw;
    if let Some(min) = model.clamp_min {
        value = value.max(min);
    }
    if let Some(max) = model.clamp_max {
        value = value.min(max);
    }
    if value != raw {
        *clamped += 1;
    }
    Ok(value)
}

fn draw_covariate<R: Rng>(kind: &CovariateKind, x: f64, rng: &mut R) -> f64 {
    match kind {
        CovariateKind::Binary { base, slope } => {
            let p = (base + slope * x).clamp(0.0, 1.0);
            if rng.gen_bool(p) {
                1.0
            } else {
                0.0
            }
        }
        CovariateKind::Continuous {
            poly,
            noise_sd,
            min,
            round,
        } => {
            let mean = poly.iter().rev().fold(0.0, |acc, &b| acc * x + b);
            let mut value = mean
                + if *noise_sd > 0.0 {
                    Normal::new(0.0, *noise_sd).unwrap().sample(rng)
                } else {
                    0.0
                };
            if let Some(min) = min {
                value = value.max(*min);
            }
            if *round {
                value = value.round();
            }
            value
        }
        CovariateKind::UniformInt { lo, hi } => rng.gen_range(*lo..=*hi) as f64,
    }
}

/// Closed-form truths implied by the simulator configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueEstimands {
    pub first_stage: f64,
    pub itt_oop: f64,
    pub itt_adherence: f64,
    pub complier_oop: f64,
    pub complier_adherence: f64,
    /// Observed below-boundary means, including the early-qualifier share of
    /// the complier effect.
    pub q_pre: f64,
    pub p_pre: f64,
    pub ped: f64,
}

/// Estimands implied by `params`: the first stage is the compliance
/// difference, ITT effects are `complier_jump × first_stage`, the Wald
/// estimands are the complier jumps themselves, and the baselines are the
/// below-side boundary values of the observed means.
pub fn true_estimands(params: &CohortParams) -> TrueEstimands {
    let fs = params.compliance.p_above - params.compliance.p_below;
    let complier_oop = params.oop.complier_jump;
    let complier_adherence = params.adherence.complier_jump;
    let p_pre = params.oop.baseline(0.0, false) + complier_oop * params.compliance.p_below;
    let q_pre = params.adherence.baseline(0.0, false) + complier_adherence * params.compliance.p_below;
    let ped = if complier_oop == 0.0 {
        if complier_adherence == 0.0 {
            0.0
        } else {
            f64::NAN
        }
    } else {
        (complier_adherence / q_pre) / (complier_oop / p_pre)
    };
    TrueEstimands {
        first_stage: fs,
        itt_oop: complier_oop * fs,
        itt_adherence: complier_adherence * fs,
        complier_oop,
        complier_adherence,
        q_pre,
        p_pre,
        ped,
    }
}

/// Monte Carlo settings: which specs to estimate with, replication count,
/// and the master seed replications derive their streams from.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSettings {
    pub replications: usize,
    pub seed: u64,
    pub oop_spec: RdSpec,
    pub adherence_spec: RdSpec,
    pub stage_spec: RdSpec,
    pub honest: HonestSettings,
}

impl MonteCarloSettings {
    pub fn new(replications: usize, seed: u64) -> Self {
        MonteCarloSettings {
            replications,
            seed,
            oop_spec: RdSpec::main_analysis(OutcomeKey::Oop),
            adherence_spec: RdSpec::main_analysis(OutcomeKey::Adherence),
            stage_spec: RdSpec::main_analysis(OutcomeKey::Treated),
            honest: HonestSettings::default(),
        }
    }
}

/// One estimand's row of a Monte Carlo summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandSummary {
    pub estimand: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub mean_bias: f64,
    pub empirical_se: f64,
    pub conventional_coverage: f64,
    pub honest_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub replications: usize,
    pub failed: usize,
    pub rows: Vec<EstimandSummary>,
}

impl MonteCarloSummary {
    pub fn row(&self, estimand: &str) -> Option<&EstimandSummary> {
        self.rows.iter().find(|r| r.estimand == estimand)
    }
}

struct RepEstimates {
    // (estimate, conventional ci, honest ci) per estimand
    cells: Vec<(f64, (f64, f64), (f64, f64))>,
}

const ESTIMAND_NAMES: [&str; 5] = [
    "first_stage",
    "itt_oop",
    "itt_adherence",
    "fuzzy_oop",
    "fuzzy_adherence",
];

/// Repeated simulate → estimate: mean bias, empirical SE, and conventional
/// and honest CI coverage per estimand. Deterministic for a fixed seed,
/// independent of thread count.
pub fn monte_carlo(params: &CohortParams, settings: &MonteCarloSettings) -> Result<MonteCarloSummary> {
    if settings.replications < 100 {
        return Err(RdError::InvalidSpec(format!(
            "monte carlo needs at least 100 replications (got {})",
            settings.replications
        )));
    }
    params.validate()?;
    let truths = true_estimands(params);
    let truth_of = [
        truths.first_stage,
        truths.itt_oop,
        truths.itt_adherence,
        truths.complier_oop,
        truths.complier_adherence,
    ];

    let reps: Vec<Option<RepEstimates>> = map_indexed(settings.replications, |i| {
        let mut rng = stream_rng(settings.seed, i as u64);
        run_replication(params, settings, &mut rng).ok()
    });

    let used: Vec<&RepEstimates> = reps.iter().flatten().collect();
    let failed = settings.replications - used.len();
    if used.is_empty() {
        return Err(RdError::Calibration("every replication failed".into()));
    }

    let mut rows = Vec::with_capacity(ESTIMAND_NAMES.len());
    for (k, name) in ESTIMAND_NAMES.iter().enumerate() {
        let estimates: Vec<f64> = used.iter().map(|r| r.cells[k].0).collect();
        let n = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / n;
        let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let truth = truth_of[k];
        let covered = |ci: &(f64, f64)| ci.0 <= truth && truth <= ci.1;
        let conventional_coverage =
            used.iter().filter(|r| covered(&r.cells[k].1)).count() as f64 / n;
        let honest_coverage = used.iter().filter(|r| covered(&r.cells[k].2)).count() as f64 / n;
        rows.push(EstimandSummary {
            estimand: name.to_string(),
            truth,
            mean_estimate: mean,
            mean_bias: mean - truth,
            empirical_se: var.sqrt(),
            conventional_coverage,
            honest_coverage,
        });
    }

    Ok(MonteCarloSummary {
        replications: settings.replications,
        failed,
        rows,
    })
}

fn run_replication<R: Rng>(
    params: &CohortParams,
    settings: &MonteCarloSettings,
    rng: &mut R,
) -> Result<RepEstimates> {
    let (cohort, _) = simulate_with_rng(params, rng)?;
    let alpha = settings.honest.alpha;

    let fs = first_stage_with_honest(&cohort, &settings.stage_spec, &settings.honest)?;
    let oop = sharp_with_honest(&cohort, &settings.oop_spec, &settings.honest)?;
    let adh = sharp_with_honest(&cohort, &settings.adherence_spec, &settings.honest)?;
    let fuzzy_oop = wald_from_fits(oop.clone(), fs.clone(), WEAK_STAGE_FLOOR)?;
    let fuzzy_adh = wald_from_fits(adh.clone(), fs.clone(), WEAK_STAGE_FLOOR)?;

    let honest_of = |fit: &crate::estimators::RdFit| {
        let ci = fit.honest_ci.as_ref().expect("pipeline attaches honest CIs");
        (ci.lower, ci.upper)
    };
    let fuzzy_cell = |fuzzy: &crate::estimators::FuzzyResult| {
        let z = crate::honest::normal_quantile(1.0 - alpha / 2.0);
        let conventional = (fuzzy.wald - z * fuzzy.se, fuzzy.wald + z * fuzzy.se);
        (
            fuzzy.wald,
            conventional,
            fuzzy.honest_ci.expect("reduced form carries an honest CI"),
        )
    };

    let cells = vec![
        (fs.jump, fs.conventional_ci(alpha), honest_of(&fs)),
        (oop.jump, oop.conventional_ci(alpha), honest_of(&oop)),
        (adh.jump, adh.conventional_ci(alpha), honest_of(&adh)),
        fuzzy_cell(&fuzzy_oop),
        fuzzy_cell(&fuzzy_adh),
    ];
    Ok(RepEstimates { cells })
}
