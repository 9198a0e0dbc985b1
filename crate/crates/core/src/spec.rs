//! Estimation configuration: kernel, fit scope, and the per-model `RdSpec`.

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};

/// Kernel used to weight observations inside the bandwidth for local fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    /// `max(0, 1 - |u|)`
    Triangular,
    /// `1` on `|u| <= 1`, else `0`
    Uniform,
}

/// Whether a fit is kernel-weighted within the bandwidth or uses every
/// observation on the side with unit weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Local,
    Global,
}

/// Which observation field a model treats as its outcome.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKey {
    Oop,
    Adherence,
    /// Treatment indicator as a 0/1 outcome (first-stage models).
    Treated,
    Covariate(String),
}

impl std::fmt::Display for OutcomeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutcomeKey::Oop => write!(f, "oop"),
            OutcomeKey::Adherence => write!(f, "adherence"),
            OutcomeKey::Treated => write!(f, "treated"),
            OutcomeKey::Covariate(name) => write!(f, "covariate:{name}"),
        }
    }
}

/// Configuration for one boundary-jump estimate.
///
/// `donut_radius` is in integer years of the running variable: observations
/// with `|age - threshold| <= donut_radius` are excluded before fitting, so
/// the default radius 0 drops exactly the at-threshold ages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdSpec {
    pub threshold: i64,
    pub donut_radius: u32,
    /// Bandwidth in years; ignored when `scope` is global.
    pub bandwidth: f64,
    pub kernel: Kernel,
    /// Polynomial degree, 1..=3.
    pub order: usize,
    pub scope: Scope,
    pub outcome: OutcomeKey,
}

pub const DEFAULT_THRESHOLD: i64 = 65;
pub const DEFAULT_BANDWIDTH: f64 = 10.0;

impl RdSpec {
    /// The main-analysis spec for an outcome: local fit, triangular kernel,
    /// bandwidth 10, donut radius 0. OOP is fit linearly; enrollment and
    /// adherence quadratically.
    pub fn main_analysis(outcome: OutcomeKey) -> Self {
        let order = match outcome {
            OutcomeKey::Oop => 1,
            OutcomeKey::Adherence | OutcomeKey::Treated => 2,
            OutcomeKey::Covariate(_) => 1,
        };
        RdSpec {
            threshold: DEFAULT_THRESHOLD,
            donut_radius: 0,
            bandwidth: DEFAULT_BANDWIDTH,
            kernel: Kernel::Triangular,
            order,
            scope: Scope::Local,
            outcome,
        }
    }

    pub fn with_threshold(mut self, threshold: i64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_bandwidth(mut self, bandwidth: f64) -> Self {
        self.bandwidth = bandwidth;
        self
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = order;
        self
    }

    pub fn with_scope(mut self, scope: Scope) -> Self {
        self.scope = scope;
        self
    }

    pub fn with_donut_radius(mut self, donut_radius: u32) -> Self {
        self.donut_radius = donut_radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.order) {
            return Err(RdError::InvalidSpec(format!(
                "polynomial order must be 1, 2, or 3 (got {})",
                self.order
            )));
        }
        if !self.bandwidth.is_finite() || self.bandwidth <= 0.0 {
            return Err(RdError::InvalidSpec(format!(
                "bandwidth must be positive (got {})",
                self.bandwidth
            )));
        }
        if self.bandwidth <= f64::from(self.donut_radius) {
            return Err(RdError::InvalidSpec(format!(
                "bandwidth {} must exceed donut radius {}",
                self.bandwidth, self.donut_radius
            )));
        }
        Ok(())
    }
}
