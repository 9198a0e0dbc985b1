//! Declarative run configuration (TOML) with full defaults matching the
//! main analysis: bandwidth 10, triangular kernel, donut radius 0, honest
//! scale factor 4, alpha 0.05.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use donut_rd::elasticity::BaselineMode;
use donut_rd::honest::{HonestSettings, MInterpretation};
use donut_rd::spec::{Kernel, OutcomeKey, RdSpec, Scope};
use donut_rd::synth::CohortParams;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// CSV cohort to analyze. Exactly one of `input` / `simulate` must be set.
    pub input: Option<InputConfig>,
    /// Simulator parameters to draw the cohort from.
    pub simulate: Option<SimulateConfig>,
    /// Master seed; every stochastic component derives its stream from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub specs: SpecsConfig,
    #[serde(default)]
    pub honest: HonestConfig,
    #[serde(default)]
    pub elasticity: ElasticityConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

fn default_seed() -> u64 {
    0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    #[serde(default = "default_threshold")]
    pub threshold: i64,
}

fn default_threshold() -> i64 {
    donut_rd::spec::DEFAULT_THRESHOLD
}

/// Simulator overrides on top of the paper-scale calibration.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n: Option<usize>,
    pub threshold: Option<i64>,
    pub age_range: Option<(i64, i64)>,
    pub p_below: Option<f64>,
    pub p_above: Option<f64>,
    pub oop_jump: Option<f64>,
    pub adherence_jump: Option<f64>,
    /// Zero both outcome jumps (null DGP).
    #[serde(default)]
    pub null_effects: bool,
}

impl SimulateConfig {
    pub fn to_params(&self, seed: u64) -> CohortParams {
        let mut params = if self.null_effects {
            CohortParams::null_effects(seed)
        } else {
            CohortParams::paper_calibration(seed)
        };
        if let Some(n) = self.n {
            params.n = n;
        }
        if let Some(t) = self.threshold {
            params.threshold = t;
        }
        if let Some(range) = self.age_range {
            params.age_range = range;
        }
        if let Some(p) = self.p_below {
            params.compliance.p_below = p;
        }
        if let Some(p) = self.p_above {
            params.compliance.p_above = p;
        }
        if let Some(j) = self.oop_jump {
            params.oop.complier_jump = j;
        }
        if let Some(j) = self.adherence_jump {
            params.adherence.complier_jump = j;
        }
        params
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SpecsConfig {
    #[serde(default)]
    pub oop: SpecOverride,
    #[serde(default)]
    pub adherence: SpecOverride,
    #[serde(default)]
    pub enrollment: SpecOverride,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SpecOverride {
    pub donut_radius: Option<u32>,
    pub bandwidth: Option<f64>,
    pub kernel: Option<Kernel>,
    pub order: Option<usize>,
    pub scope: Option<Scope>,
}

impl SpecOverride {
    pub fn apply(&self, mut spec: RdSpec) -> RdSpec {
        if let Some(r) = self.donut_radius {
            spec.donut_radius = r;
        }
        if let Some(h) = self.bandwidth {
            spec.bandwidth = h;
        }
        if let Some(k) = self.kernel {
            spec.kernel = k;
        }
        if let Some(p) = self.order {
            spec.order = p;
        }
        if let Some(s) = self.scope {
            spec.scope = s;
        }
        spec
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HonestConfig {
    pub scale_factor: f64,
    pub alpha: f64,
    pub m_interpretation: MInterpretation,
}

impl Default for HonestConfig {
    fn default() -> Self {
        let defaults = HonestSettings::default();
        HonestConfig {
            scale_factor: defaults.scale_factor,
            alpha: defaults.alpha,
            m_interpretation: defaults.interpretation,
        }
    }
}

impl HonestConfig {
    pub fn to_settings(&self) -> HonestSettings {
        HonestSettings {
            scale_factor: self.scale_factor,
            alpha: self.alpha,
            interpretation: self.m_interpretation,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElasticityConfig {
    /// "boundary" or "window".
    pub baseline_mode: String,
    /// Window width in years when `baseline_mode = "window"`.
    pub baseline_window: f64,
    pub replicates: usize,
}

impl Default for ElasticityConfig {
    fn default() -> Self {
        ElasticityConfig {
            baseline_mode: "boundary".into(),
            baseline_window: 5.0,
            replicates: donut_rd::elasticity::DEFAULT_REPLICATES,
        }
    }
}

impl ElasticityConfig {
    pub fn mode(&self) -> Result<BaselineMode, String> {
        match self.baseline_mode.as_str() {
            "boundary" => Ok(BaselineMode::Boundary),
            "window" => Ok(BaselineMode::Window {
                width: self.baseline_window,
            }),
            other => Err(format!("unknown baseline_mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    pub placebo_thresholds: Vec<i64>,
    pub bandwidths: Vec<f64>,
    pub balance_covariates: Vec<String>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            placebo_thresholds: donut_rd::diagnostics::DEFAULT_PLACEBO_THRESHOLDS.to_vec(),
            bandwidths: donut_rd::diagnostics::default_bandwidth_grid(),
            balance_covariates: vec![
                "sex".into(),
                "charlson".into(),
                "prior_oop_30d".into(),
                "dx_year".into(),
                "dx_month".into(),
            ],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let config: RunConfig =
            toml::from_str(&text).map_err(|e| format!("cannot parse config: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), String> {
        match (&self.input, &self.simulate) {
            (Some(_), Some(_)) => {
                return Err("config sets both `input` and `simulate`; pick one".into())
            }
            (None, None) => return Err("config must set either `input` or `simulate`".into()),
            _ => {}
        }
        self.elasticity.mode().map(|_| ())?;
        if !(0.0..1.0).contains(&self.honest.alpha) || self.honest.alpha <= 0.0 {
            return Err(format!("honest.alpha must be in (0, 1), got {}", self.honest.alpha));
        }
        Ok(())
    }

    pub fn oop_spec(&self) -> RdSpec {
        self.specs.oop.apply(self.base_spec(OutcomeKey::Oop))
    }

    pub fn adherence_spec(&self) -> RdSpec {
        self.specs.adherence.apply(self.base_spec(OutcomeKey::Adherence))
    }

    pub fn stage_spec(&self) -> RdSpec {
        self.specs.enrollment.apply(self.base_spec(OutcomeKey::Treated))
    }

    fn base_spec(&self, outcome: OutcomeKey) -> RdSpec {
        let mut spec = RdSpec::main_analysis(outcome);
        if let Some(input) = &self.input {
            spec.threshold = input.threshold;
        }
        if let Some(sim) = &self.simulate {
            if let Some(t) = sim.threshold {
                spec.threshold = t;
            }
        }
        spec
    }
}
