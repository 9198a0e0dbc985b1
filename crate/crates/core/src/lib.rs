//! Donut fuzzy regression discontinuity estimation with honest confidence
//! intervals, price-elasticity inference, and a synthetic claims-cohort
//! simulator.
//!
//! The library implements the full estimation flow for an age-threshold
//! eligibility design with a discrete running variable:
//!
//! - [`cohort`]: data model, CSV ingestion/validation, donut exclusion, and
//!   the 90-day OOP / PDC standardization rules;
//! - [`local`]: kernel-weighted polynomial boundary fits with effective
//!   weights and robust standard errors;
//! - [`estimators`]: sharp (reduced-form) RD, first-stage RD on treatment,
//!   and the fuzzy Wald estimator;
//! - [`honest`]: bias-aware confidence intervals: a smoothness bound from
//!   scaled global quadratic fits, worst-case extrapolation bias, and
//!   folded-normal critical values;
//! - [`elasticity`]: price elasticity of demand with bootstrap percentile
//!   intervals;
//! - [`diagnostics`]: placebo thresholds, bandwidth sweeps, covariate
//!   balance, and global trend series;
//! - [`synth`]: the simulator and Monte Carlo harness used as the
//!   verification oracle.
//!
//! Replicated computations (bootstrap, Monte Carlo) run on rayon when the
//! default `parallel` feature is enabled and fall back to a sequential loop
//! otherwise; per-replicate RNG streams make the output identical either
//! way.

pub mod cohort;
pub mod diagnostics;
pub mod elasticity;
pub mod error;
pub mod estimators;
pub mod honest;
pub mod local;
pub mod parallel;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod spec;
pub mod synth;

pub use cohort::{compute_pdc, standardize_oop, Cohort, CsvSchema, Fill, Observation, Provenance};
pub use elasticity::{bootstrap_ped, compute_ped, BaselineMode, ElasticitySettings, PedResult};
pub use error::{RdError, Result};
pub use estimators::{first_stage, fuzzy_rd, sharp_rd, wald_from_fits, FuzzyResult, RdFit};
pub use honest::{estimate_m, honest_cv, honest_interval, worst_case_bias, HonestCi, HonestSettings, MInterpretation, SmoothnessBound};
pub use local::{fit_boundary, kernel_weight, EffectiveWeight, Side, SideFit};
pub use spec::{Kernel, OutcomeKey, RdSpec, Scope};
pub use synth::{monte_carlo, simulate_cohort, true_estimands, CohortParams, MonteCarloSettings, MonteCarloSummary};
