//! Cohort data model, CSV ingestion/validation, donut exclusion, and the
//! outcome-standardization rules for 90-day OOP and PDC adherence.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ErrorSide, RdError, Result};
use crate::spec::{OutcomeKey, RdSpec};

/// One patient at their index date.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub id: String,
    /// Integer years at index date (index year minus birth year).
    pub age: i64,
    /// Enrolled in Part D.
    pub treated: bool,
    /// Out-of-pocket USD, standardized to the 90-day follow-up; >= 0.
    pub oop: f64,
    /// Proportion of days covered, in [0, 1].
    pub adherence: f64,
    /// Optional balance covariates by name.
    pub covariates: BTreeMap<String, f64>,
}

impl Observation {
    /// Value of `key` for this observation; `None` when an optional
    /// covariate is absent.
    pub fn outcome(&self, key: &OutcomeKey) -> Option<f64> {
        match key {
            OutcomeKey::Oop => Some(self.oop),
            OutcomeKey::Adherence => Some(self.adherence),
            OutcomeKey::Treated => Some(if self.treated { 1.0 } else { 0.0 }),
            OutcomeKey::Covariate(name) => self.covariates.get(name).copied(),
        }
    }
}

/// Row accounting carried along with a cohort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub loaded: usize,
    pub rejected: usize,
    pub donut_dropped: usize,
}

/// Ages outside this range are treated as implausible and rejected on load.
pub const PLAUSIBLE_AGE_RANGE: (i64, i64) = (40, 95);

/// Column mapping for CSV ingestion. Columns not mapped to a core field are
/// read as covariates when `covariates` is `None`; otherwise only the named
/// covariate columns are read.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub id: String,
    pub age: String,
    pub treated: String,
    pub oop: String,
    pub adherence: String,
    pub covariates: Option<Vec<String>>,
    pub plausible_age: (i64, i64),
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            id: "id".into(),
            age: "age".into(),
            treated: "treated".into(),
            oop: "oop".into(),
            adherence: "adherence".into(),
            covariates: None,
            plausible_age: PLAUSIBLE_AGE_RANGE,
        }
    }
}

/// A validated analysis sample.
///
/// Immutable after construction: every estimator takes `&Cohort`, so cohorts
/// can be shared read-only across concurrent fits.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    observations: Vec<Observation>,
    threshold: i64,
    provenance: Provenance,
}

impl Cohort {
    /// Build a cohort from already-validated observations, enforcing the
    /// per-row invariants and the one-per-side requirement. Rows violating
    /// invariants are rejected and counted, preserving input order.
    pub fn from_observations(
        observations: Vec<Observation>,
        threshold: i64,
        source: &str,
    ) -> Result<Cohort> {
        Self::from_observations_with_range(observations, threshold, source, PLAUSIBLE_AGE_RANGE)
    }

    fn from_observations_with_range(
        observations: Vec<Observation>,
        threshold: i64,
        source: &str,
        plausible_age: (i64, i64),
    ) -> Result<Cohort> {
        let loaded = observations.len();
        let kept: Vec<Observation> = observations
            .into_iter()
            .filter(|obs| row_is_valid(obs, plausible_age))
            .collect();
        let provenance = Provenance {
            source: source.to_string(),
            loaded,
            rejected: loaded - kept.len(),
            donut_dropped: 0,
        };
        let cohort = Cohort {
            observations: kept,
            threshold,
            provenance,
        };
        cohort.check_nonempty_sides()?;
        Ok(cohort)
    }

    /// Load a cohort from CSV. Header must contain the mapped core columns;
    /// rows violating invariants are rejected and counted in provenance.
    pub fn load(path: &Path, schema: &CsvSchema, threshold: i64) -> Result<Cohort> {
        let mut reader = csv::ReaderBuilder::new().flexible(false).from_path(path)?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| RdError::Schema(name.to_string()))
        };
        let id_col = col(&schema.id)?;
        let age_col = col(&schema.age)?;
        let treated_col = col(&schema.treated)?;
        let oop_col = col(&schema.oop)?;
        let adherence_col = col(&schema.adherence)?;

        let core_cols = [id_col, age_col, treated_col, oop_col, adherence_col];
        let covariate_cols: Vec<(usize, String)> = match &schema.covariates {
            Some(names) => names
                .iter()
                .map(|n| col(n).map(|i| (i, n.clone())))
                .collect::<Result<Vec<_>>>()?,
            None => headers
                .iter()
                .enumerate()
                .filter(|(i, _)| !core_cols.contains(i))
                .map(|(i, h)| (i, h.to_string()))
                .collect(),
        };

        let mut loaded = 0usize;
        let mut kept = Vec::new();
        for record in reader.records() {
            let record = record?;
            loaded += 1;
            if let Some(obs) = parse_row(&record, &core_cols, &covariate_cols) {
                if row_is_valid(&obs, schema.plausible_age) {
                    kept.push(obs);
                }
            }
        }
        if kept.is_empty() {
            return Err(RdError::EmptyCohort);
        }
        let provenance = Provenance {
            source: path.display().to_string(),
            loaded,
            rejected: loaded - kept.len(),
            donut_dropped: 0,
        };
        let cohort = Cohort {
            observations: kept,
            threshold,
            provenance,
        };
        cohort.check_nonempty_sides()?;
        Ok(cohort)
    }

    /// Write the cohort in the same CSV format `load` reads. Covariate
    /// columns are the sorted union of covariate names across rows; floats
    /// are written with shortest round-trip formatting, so load ∘ write is
    /// exact.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut covariate_names: Vec<String> = Vec::new();
        for obs in &self.observations {
            for name in obs.covariates.keys() {
                if !covariate_names.contains(name) {
                    covariate_names.push(name.clone());
                }
            }
        }
        covariate_names.sort();

        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(file, "id,age,treated,oop,adherence")?;
        for name in &covariate_names {
            write!(file, ",{name}")?;
        }
        writeln!(file)?;
        for obs in &self.observations {
            write!(
                file,
                "{},{},{},{},{}",
                obs.id,
                obs.age,
                u8::from(obs.treated),
                obs.oop,
                obs.adherence
            )?;
            for name in &covariate_names {
                match obs.covariates.get(name) {
                    Some(v) => write!(file, ",{v}")?,
                    None => write!(file, ",")?,
                }
            }
            writeln!(file)?;
        }
        file.flush()?;
        Ok(())
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn threshold(&self) -> i64 {
        self.threshold
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Same observations re-keyed to a different threshold (placebo scans).
    pub fn rethreshold(&self, threshold: i64) -> Result<Cohort> {
        let cohort = Cohort {
            observations: self.observations.clone(),
            threshold,
            provenance: self.provenance.clone(),
        };
        cohort.check_nonempty_sides()?;
        Ok(cohort)
    }

    /// Remove observations with `|age - threshold| <= donut_radius`.
    /// Idempotent for a fixed spec; errors if a side empties.
    pub fn apply_donut(&self, spec: &RdSpec) -> Result<Cohort> {
        let radius = i64::from(spec.donut_radius);
        let kept: Vec<Observation> = self
            .observations
            .iter()
            .filter(|obs| (obs.age - spec.threshold).abs() > radius)
            .cloned()
            .collect();
        let dropped = self.observations.len() - kept.len();
        let mut provenance = self.provenance.clone();
        provenance.donut_dropped += dropped;
        let cohort = Cohort {
            observations: kept,
            threshold: self.threshold,
            provenance,
        };
        cohort.check_nonempty_sides()?;
        Ok(cohort)
    }

    /// `(age, outcome)` pairs strictly on one side of the threshold, in row
    /// order. Rows missing the outcome (absent covariate) are skipped.
    pub fn side_data(&self, key: &OutcomeKey, side: SideSel) -> Vec<(i64, f64)> {
        self.observations
            .iter()
            .filter(|obs| match side {
                SideSel::Below => obs.age < self.threshold,
                SideSel::Above => obs.age > self.threshold,
            })
            .filter_map(|obs| obs.outcome(key).map(|y| (obs.age, y)))
            .collect()
    }

    /// Resample `len()` observations with replacement (patient-level
    /// bootstrap). Side validation is deferred to the estimators so a
    /// degenerate draw surfaces as a per-replicate failure.
    pub fn resample<R: rand::Rng>(&self, rng: &mut R) -> Cohort {
        let n = self.observations.len();
        let observations = (0..n)
            .map(|_| self.observations[rng.gen_range(0..n)].clone())
            .collect();
        Cohort {
            observations,
            threshold: self.threshold,
            provenance: self.provenance.clone(),
        }
    }

    fn check_nonempty_sides(&self) -> Result<()> {
        if self.observations.is_empty() {
            return Err(RdError::EmptyCohort);
        }
        if !self.observations.iter().any(|o| o.age < self.threshold) {
            return Err(RdError::EmptySide {
                side: ErrorSide::Below,
                threshold: self.threshold,
            });
        }
        if !self.observations.iter().any(|o| o.age > self.threshold) {
            return Err(RdError::EmptySide {
                side: ErrorSide::Above,
                threshold: self.threshold,
            });
        }
        Ok(())
    }
}

/// Side selector for extracting fit data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideSel {
    Below,
    Above,
}

fn row_is_valid(obs: &Observation, plausible_age: (i64, i64)) -> bool {
    obs.age >= plausible_age.0
        && obs.age <= plausible_age.1
        && obs.oop.is_finite()
        && obs.oop >= 0.0
        && obs.adherence.is_finite()
        && (0.0..=1.0).contains(&obs.adherence)
}

fn parse_row(
    record: &csv::StringRecord,
    core_cols: &[usize; 5],
    covariate_cols: &[(usize, String)],
) -> Option<Observation> {
    let [id_col, age_col, treated_col, oop_col, adherence_col] = *core_cols;
    let id = record.get(id_col)?.to_string();
    let age: i64 = record.get(age_col)?.trim().parse().ok()?;
    let treated = match record.get(treated_col)?.trim() {
        "0" => false,
        "1" => true,
        _ => return None,
    };
    let oop: f64 = record.get(oop_col)?.trim().parse().ok()?;
    let adherence: f64 = record.get(adherence_col)?.trim().parse().ok()?;
    let mut covariates = BTreeMap::new();
    for (col, name) in covariate_cols {
        let raw = record.get(*col)?.trim();
        if raw.is_empty() {
            continue;
        }
        let value: f64 = raw.parse().ok()?;
        covariates.insert(name.clone(), value);
    }
    Some(Observation {
        id,
        age,
        treated,
        oop,
        adherence,
        covariates,
    })
}

/// One prescription fill used to standardize OOP to the 90-day window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fill {
    pub days_supplied: u32,
    pub patient_pay: f64,
    pub coupon: f64,
}

/// Follow-up window for outcome standardization, in days.
pub const FOLLOW_UP_DAYS: u32 = 90;

/// Standardize fill-level out-of-pocket payments to the 90-day window.
///
/// Each fill's net OOP (patient pay minus coupon) is scaled to its 90-day
/// equivalent, then averaged: a single 90-day fill returns its net OOP, and
/// multiple 30-day fills return their mean net OOP times three.
pub fn standardize_oop(fills: &[Fill]) -> Result<f64> {
    if fills.is_empty() {
        return Err(RdError::Data("no fills to standardize".into()));
    }
    let mut total = 0.0;
    for fill in fills {
        if fill.days_supplied != 30 && fill.days_supplied != 90 {
            return Err(RdError::UnsupportedFill(fill.days_supplied));
        }
        if fill.coupon < 0.0 || fill.coupon > fill.patient_pay {
            return Err(RdError::Data(format!(
                "coupon {} exceeds patient pay {}",
                fill.coupon, fill.patient_pay
            )));
        }
        let net = fill.patient_pay - fill.coupon;
        total += net * f64::from(FOLLOW_UP_DAYS) / f64::from(fill.days_supplied);
    }
    Ok(total / fills.len() as f64)
}

/// Proportion of days covered: supplied days over the window, capped at 1.
pub fn compute_pdc(days_supplied_total: u32, window_days: u32) -> f64 {
    assert!(window_days > 0, "window_days must be positive");
    (f64::from(days_supplied_total) / f64::from(window_days)).min(1.0)
}
