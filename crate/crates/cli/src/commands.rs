//! Subcommand implementations: simulate, estimate, diagnose, elasticity,
//! and the bundling report command.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;

use donut_rd::cohort::{Cohort, CsvSchema};
use donut_rd::diagnostics::{bandwidth_sweep, covariate_balance, global_trend, placebo_scan};
use donut_rd::elasticity::{bootstrap_ped, ElasticitySettings};
use donut_rd::error::RdError;
use donut_rd::estimators::{wald_from_fits, RdFit, WEAK_STAGE_FLOOR};
use donut_rd::honest::HonestSettings;
use donut_rd::pipeline::{first_stage_with_honest, sharp_with_honest};
use donut_rd::report::{FitReport, FuzzyReport};
use donut_rd::spec::{OutcomeKey, RdSpec, Scope};
use donut_rd::synth::{simulate_cohort_with_stats, true_estimands};

use crate::config::RunConfig;
use crate::plotdata::{write_plot_csv, PlotRow};
use crate::CliError;

pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub quiet: bool,
}

impl Context {
    fn say(&self, message: &str) {
        if !self.quiet {
            println!("{message}");
        }
    }

    fn honest(&self) -> HonestSettings {
        let mut settings = self.config.honest.to_settings();
        settings.scale_factor = self.config.honest.scale_factor;
        settings
    }

    /// Load the input CSV or draw the configured simulated cohort.
    fn cohort(&self) -> Result<Cohort, CliError> {
        match (&self.config.input, &self.config.simulate) {
            (Some(input), None) => {
                if !input.path.exists() {
                    return Err(CliError::Usage(format!(
                        "input file {} does not exist",
                        input.path.display()
                    )));
                }
                Cohort::load(&input.path, &CsvSchema::default(), input.threshold)
                    .map_err(CliError::from_load)
            }
            (None, Some(sim)) => {
                let params = sim.to_params(self.seed);
                let (cohort, _) = simulate_cohort_with_stats(&params).map_err(CliError::Domain)?;
                Ok(cohort)
            }
            _ => Err(CliError::Usage(
                "config must set exactly one of `input` / `simulate`".into(),
            )),
        }
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir)?;
        let path = self.out_dir.join(name);
        let text = serde_json::to_string_pretty(value).expect("reports serialize");
        std::fs::write(&path, text)?;
        self.say(&format!("wrote {}", path.display()));
        Ok(())
    }

    /// Structured error report for domain failures (exit code 1).
    pub fn write_error_report(&self, command: &str, error: &RdError) {
        let _ = std::fs::create_dir_all(&self.out_dir);
        let body = json!({
            "command": command,
            "error": { "message": error.to_string() },
        });
        let _ = std::fs::write(
            self.out_dir.join("report.json"),
            serde_json::to_string_pretty(&body).unwrap(),
        );
    }
}

pub fn cmd_simulate(ctx: &Context) -> Result<(), CliError> {
    let sim = ctx
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Usage("simulate requires a [simulate] config block".into()))?;
    let params = sim.to_params(ctx.seed);
    let (cohort, stats) = simulate_cohort_with_stats(&params).map_err(CliError::Domain)?;
    std::fs::create_dir_all(&ctx.out_dir)?;
    let csv_path = ctx.out_dir.join("cohort.csv");
    cohort.write(&csv_path).map_err(CliError::Domain)?;
    ctx.say(&format!("wrote {}", csv_path.display()));
    ctx.write_json(
        "estimands.json",
        &json!({
            "params": params,
            "true_estimands": true_estimands(&params),
            "clamp_stats": stats,
            "provenance": cohort.provenance(),
        }),
    )?;
    Ok(())
}

/// One cell of the specification grid: a name, the three model specs, and
/// the honest scale factor.
struct GridCell {
    name: &'static str,
    oop: RdSpec,
    adherence: RdSpec,
    stage: RdSpec,
    scale_factor: f64,
}

fn spec_grid(ctx: &Context) -> Vec<GridCell> {
    let oop = ctx.config.oop_spec();
    let adherence = ctx.config.adherence_spec();
    let stage = ctx.config.stage_spec();
    let scale = ctx.config.honest.scale_factor;

    let shaped = |scope: Scope, order: usize| {
        let set = |spec: &RdSpec| spec.clone().with_scope(scope).with_order(order);
        (set(&oop), set(&adherence), set(&stage))
    };

    let mut cells = vec![GridCell {
        name: "main",
        oop: oop.clone(),
        adherence: adherence.clone(),
        stage: stage.clone(),
        scale_factor: scale,
    }];
    for (name, scope, order) in [
        ("global_linear", Scope::Global, 1),
        ("global_quadratic", Scope::Global, 2),
        ("global_cubic", Scope::Global, 3),
        ("local_quadratic", Scope::Local, 2),
        ("local_cubic", Scope::Local, 3),
    ] {
        let (o, a, s) = shaped(scope, order);
        cells.push(GridCell {
            name,
            oop: o,
            adherence: a,
            stage: s,
            scale_factor: scale,
        });
    }
    for (name, scale_factor) in [("honest_scale_2", 2.0), ("honest_scale_6", 6.0)] {
        cells.push(GridCell {
            name,
            oop: oop.clone(),
            adherence: adherence.clone(),
            stage: stage.clone(),
            scale_factor,
        });
    }
    cells
}

#[derive(Serialize)]
struct OutcomeCell {
    sharp: FitReport,
    fuzzy: FuzzyReport,
}

#[derive(Serialize)]
struct EstimateCell {
    name: String,
    scale_factor: f64,
    first_stage: FitReport,
    oop: OutcomeCell,
    adherence: OutcomeCell,
}

fn run_cell(cohort: &Cohort, cell: &GridCell, honest_base: &HonestSettings) -> Result<EstimateCell, RdError> {
    let honest = HonestSettings {
        scale_factor: cell.scale_factor,
        ..*honest_base
    };
    let alpha = honest.alpha;
    let stage_fit = first_stage_with_honest(cohort, &cell.stage, &honest)?;
    let outcome_cell = |spec: &RdSpec| -> Result<OutcomeCell, RdError> {
        let sharp = sharp_with_honest(cohort, spec, &honest)?;
        let fuzzy = wald_from_fits(sharp.clone(), stage_fit.clone(), WEAK_STAGE_FLOOR)?;
        Ok(OutcomeCell {
            sharp: FitReport::from_fit(&sharp, alpha),
            fuzzy: FuzzyReport::from_result(&fuzzy, alpha),
        })
    };
    Ok(EstimateCell {
        name: cell.name.to_string(),
        scale_factor: cell.scale_factor,
        first_stage: FitReport::from_fit(&stage_fit, alpha),
        oop: outcome_cell(&cell.oop)?,
        adherence: outcome_cell(&cell.adherence)?,
    })
}

pub fn cmd_estimate(ctx: &Context) -> Result<(), CliError> {
    let cohort = ctx.cohort()?;
    let honest = ctx.honest();
    let cells = spec_grid(ctx);
    let results: Vec<Result<EstimateCell, RdError>> =
        donut_rd::parallel::map_indexed(cells.len(), |i| run_cell(&cohort, &cells[i], &honest));
    let mut reported = Vec::with_capacity(results.len());
    for result in results {
        reported.push(result.map_err(CliError::Domain)?);
    }
    ctx.write_json(
        "report.json",
        &json!({
            "command": "estimate",
            "seed": ctx.seed,
            "alpha": honest.alpha,
            "provenance": cohort.provenance(),
            "cells": reported,
        }),
    )?;
    Ok(())
}

fn fit_plot_rows(cohort: &Cohort, fit: &RdFit, outcome: &OutcomeKey) -> Vec<PlotRow> {
    let spec = &fit.spec_used;
    let c = spec.threshold as f64;
    let radius = f64::from(spec.donut_radius);
    let mut rows = Vec::new();

    // per-age means over the full (pre-donut) cohort
    let mut ages: Vec<i64> = cohort.observations().iter().map(|o| o.age).collect();
    ages.sort_unstable();
    ages.dedup();
    for age in &ages {
        let values: Vec<f64> = cohort
            .observations()
            .iter()
            .filter(|o| o.age == *age)
            .filter_map(|o| o.outcome(outcome))
            .collect();
        if !values.is_empty() {
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            rows.push(PlotRow::point("mean", *age as f64, mean));
        }
    }

    // fitted polynomial per side, solid over the supported ages and dotted
    // (extrapolated) across the donut up to the threshold itself
    let eval = |coefs: &[f64], x: f64| coefs.iter().rev().fold(0.0, |acc, &b| acc * x + b);
    let half_width = match spec.scope {
        Scope::Local => spec.bandwidth,
        Scope::Global => c - ages[0] as f64,
    };
    let steps = 40usize;
    let mut side_rows = |coefs: &[f64], sign: f64, fit_name: &str, extrap_name: &str| {
        let support_edge = radius + 1.0; // first age with data on this side
        for k in 0..=steps {
            let x = sign * (support_edge + (half_width - support_edge) * k as f64 / steps as f64);
            rows.push(PlotRow::point(fit_name, c + x, eval(coefs, x)));
        }
        for k in 0..=4 {
            let x = sign * support_edge * (4 - k) as f64 / 4.0;
            rows.push(PlotRow::point(extrap_name, c + x, eval(coefs, x)));
        }
    };
    side_rows(&fit.below.coefficients, -1.0, "fit_below", "extrapolation_below");
    side_rows(&fit.above.coefficients, 1.0, "fit_above", "extrapolation_above");

    // boundary estimates at the threshold (the hollow-triangle markers)
    rows.push(PlotRow::point("boundary_below", c, fit.below.boundary_value));
    rows.push(PlotRow::point("boundary_above", c, fit.above.boundary_value));
    if let Some(ci) = &fit.honest_ci {
        rows.push(PlotRow::with_interval("rd_estimate", c, fit.jump, ci.lower, ci.upper));
    }
    rows
}

pub fn cmd_diagnose(ctx: &Context) -> Result<(), CliError> {
    let cohort = ctx.cohort()?;
    let honest = ctx.honest();
    let alpha = honest.alpha;
    let plot_dir = ctx.out_dir.join("plotdata");
    std::fs::create_dir_all(&plot_dir)?;

    let outcomes = [
        ("oop", OutcomeKey::Oop, ctx.config.oop_spec()),
        ("adherence", OutcomeKey::Adherence, ctx.config.adherence_spec()),
        ("enrollment", OutcomeKey::Treated, ctx.config.stage_spec()),
    ];

    // fit + trend plot data per outcome
    for (name, key, spec) in &outcomes {
        let fit = sharp_with_honest(&cohort, spec, &honest).map_err(CliError::Domain)?;
        write_plot_csv(
            &plot_dir.join(format!("fit_{name}.csv")),
            &fit_plot_rows(&cohort, &fit, key),
        )?;

        let trend = global_trend(&cohort, key).map_err(CliError::Domain)?;
        let mut rows = Vec::new();
        for point in &trend {
            rows.push(PlotRow::point("mean", point.age as f64, point.mean));
            if let Some(fitted) = point.fitted {
                let series = if point.age < cohort.threshold() {
                    "fit_below"
                } else {
                    "fit_above"
                };
                rows.push(PlotRow::point(series, point.age as f64, fitted));
            }
        }
        write_plot_csv(&plot_dir.join(format!("trend_{name}.csv")), &rows)?;
    }

    // placebo scans and bandwidth sweeps for the two outcomes
    let mut placebo_summary = Vec::new();
    let mut sweep_summary = Vec::new();
    for (name, _, spec) in outcomes.iter().take(2) {
        let scan = placebo_scan(
            &cohort,
            spec,
            &ctx.config.diagnostics.placebo_thresholds,
            &honest,
        );
        let mut rows = Vec::new();
        for (threshold, outcome) in &scan {
            match outcome {
                Ok(result) => {
                    let ci = result.fit.honest_ci.as_ref().expect("scan attaches honest CIs");
                    rows.push(PlotRow::with_interval(
                        "placebo",
                        *threshold as f64,
                        result.fit.jump,
                        ci.lower,
                        ci.upper,
                    ));
                    placebo_summary.push(json!({
                        "outcome": name,
                        "threshold": threshold,
                        "estimate": result.fit.jump,
                        "se": result.fit.se,
                        "honest_ci": [ci.lower, ci.upper],
                        "significant": result.significant,
                        "error": null,
                    }));
                }
                Err(error) => placebo_summary.push(json!({
                    "outcome": name,
                    "threshold": threshold,
                    "error": error.to_string(),
                })),
            }
        }
        write_plot_csv(&plot_dir.join(format!("placebo_{name}.csv")), &rows)?;

        let sweep = bandwidth_sweep(&cohort, spec, &ctx.config.diagnostics.bandwidths, &honest)
            .map_err(CliError::Domain)?;
        let mut rows = Vec::new();
        for result in &sweep {
            let ci = result.fit.honest_ci.as_ref().expect("sweep attaches honest CIs");
            rows.push(PlotRow::with_interval(
                "sweep",
                result.bandwidth,
                result.fit.jump,
                ci.lower,
                ci.upper,
            ));
            sweep_summary.push(json!({
                "outcome": name,
                "bandwidth": result.bandwidth,
                "estimate": result.fit.jump,
                "se": result.fit.se,
                "honest_ci": [ci.lower, ci.upper],
                "significant": ci.excludes_zero(),
            }));
        }
        write_plot_csv(&plot_dir.join(format!("bandwidth_{name}.csv")), &rows)?;
    }

    // covariate balance
    let balance_spec = {
        let mut spec = ctx.config.oop_spec();
        spec.order = 1;
        spec
    };
    let balance = covariate_balance(
        &cohort,
        &balance_spec,
        &ctx.config.diagnostics.balance_covariates,
        &honest,
    );
    let mut balance_rows = Vec::new();
    let mut balance_summary = Vec::new();
    for (name, outcome) in &balance {
        match outcome {
            Ok(result) => {
                let ci = result.fit.honest_ci.as_ref().expect("balance attaches honest CIs");
                balance_rows.push(PlotRow::with_interval(
                    name,
                    balance_spec.threshold as f64,
                    result.fit.jump,
                    ci.lower,
                    ci.upper,
                ));
                balance_summary.push(json!({
                    "covariate": name,
                    "estimate": result.fit.jump,
                    "se": result.fit.se,
                    "honest_ci": [ci.lower, ci.upper],
                    "significant": result.significant,
                    "n_missing": result.n_missing,
                    "error": null,
                }));
            }
            Err(error) => balance_summary.push(json!({
                "covariate": name,
                "error": error.to_string(),
            })),
        }
    }
    write_plot_csv(&plot_dir.join("balance.csv"), &balance_rows)?;

    ctx.write_json(
        "diagnostics.json",
        &json!({
            "command": "diagnose",
            "seed": ctx.seed,
            "alpha": alpha,
            "provenance": cohort.provenance(),
            "placebo": placebo_summary,
            "bandwidth_sweep": sweep_summary,
            "balance": balance_summary,
        }),
    )?;
    Ok(())
}

pub fn cmd_elasticity(ctx: &Context) -> Result<(), CliError> {
    let cohort = ctx.cohort()?;
    let settings = elasticity_settings(ctx)?;
    let result = bootstrap_ped(&cohort, &settings).map_err(CliError::Domain)?;
    ctx.write_json(
        "elasticity.json",
        &json!({
            "command": "elasticity",
            "baseline_mode": ctx.config.elasticity.baseline_mode,
            "alpha": settings.alpha,
            "provenance": cohort.provenance(),
            "result": result,
        }),
    )?;
    Ok(())
}

fn elasticity_settings(ctx: &Context) -> Result<ElasticitySettings, CliError> {
    let mode = ctx.config.elasticity.mode().map_err(CliError::Usage)?;
    let mut settings = ElasticitySettings::new(ctx.seed);
    settings.oop_spec = ctx.config.oop_spec();
    settings.adherence_spec = ctx.config.adherence_spec();
    settings.stage_spec = ctx.config.stage_spec();
    settings.baseline_mode = mode;
    settings.replicates = ctx.config.elasticity.replicates;
    settings.alpha = ctx.config.honest.alpha;
    Ok(settings)
}

pub fn cmd_report(ctx: &Context) -> Result<(), CliError> {
    cmd_estimate(ctx)?;
    cmd_diagnose(ctx)?;
    cmd_elasticity(ctx)?;
    write_summary(ctx)?;
    Ok(())
}

fn write_summary(ctx: &Context) -> Result<(), CliError> {
    let read = |name: &str| -> Result<serde_json::Value, CliError> {
        let text = std::fs::read_to_string(ctx.out_dir.join(name))?;
        Ok(serde_json::from_str(&text).expect("reports we just wrote parse"))
    };
    let report = read("report.json")?;
    let elasticity = read("elasticity.json")?;

    let mut lines = vec!["donut fuzzy RD report".to_string(), String::new()];
    if let Some(cells) = report["cells"].as_array() {
        for cell in cells {
            let name = cell["name"].as_str().unwrap_or("?");
            let fs = &cell["first_stage"];
            let oop = &cell["oop"]["fuzzy"];
            let adh = &cell["adherence"]["fuzzy"];
            lines.push(format!(
                "[{name}] first stage {:.3} (se {:.3}) | fuzzy OOP {:.2} (se {:.2}) | fuzzy adherence {:.4} (se {:.4})",
                fs["estimate"].as_f64().unwrap_or(f64::NAN),
                fs["se"].as_f64().unwrap_or(f64::NAN),
                oop["estimate"].as_f64().unwrap_or(f64::NAN),
                oop["se"].as_f64().unwrap_or(f64::NAN),
                adh["estimate"].as_f64().unwrap_or(f64::NAN),
                adh["se"].as_f64().unwrap_or(f64::NAN),
            ));
        }
    }
    lines.push(String::new());
    let ped = &elasticity["result"];
    lines.push(format!(
        "PED {:.4} (95% bootstrap CI {:.4} to {:.4}), {} replicates, seed {}",
        ped["ped"].as_f64().unwrap_or(f64::NAN),
        ped["ci"][0].as_f64().unwrap_or(f64::NAN),
        ped["ci"][1].as_f64().unwrap_or(f64::NAN),
        ped["replicates"].as_u64().unwrap_or(0),
        ped["seed"].as_u64().unwrap_or(0),
    ));
    lines.push(String::new());

    let path = ctx.out_dir.join("summary.txt");
    std::fs::write(&path, lines.join("\n"))?;
    ctx.say(&format!("wrote {}", path.display()));
    Ok(())
}
