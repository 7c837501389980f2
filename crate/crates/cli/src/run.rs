//! Pipeline orchestration and artifact persistence.

use std::path::Path;

use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind};
use crate::experiment::{self, BarrierOutcome};
use crate::io;
use crate::manifest::{RunDir, RunManifest};
use crate::plot::{emit_plot, PlotError, PlotKind, PlotStyle, Series};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("stage `{stage}`: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: kpp_core::Error,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("plot: {0}")]
    Plot(#[from] PlotError),
    #[error("input: {0}")]
    Input(String),
}

impl RunError {
    /// 2 for configuration errors, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical { source, .. } => match source {
                kpp_core::Error::InvalidParameter { .. }
                | kpp_core::Error::UnstableTimeStep { .. }
                | kpp_core::Error::OutOfRange { .. } => 2,
                _ => 3,
            },
            _ => 1,
        }
    }
}

pub fn stage(name: &'static str) -> impl Fn(kpp_core::Error) -> RunError {
    move |source| RunError::Numerical { stage: name, source }
}

/// Exit code for a finished run whose pass flags are false.
pub const EXIT_ACCEPTANCE: i32 = 4;

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest, RunError> {
    run_into(cfg, &cfg.out)
}

pub fn run_into(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest, RunError> {
    let mut dir = RunDir::create(out, &cfg.echo)?;
    dir.write("config.cfg", &cfg.echo)?;
    match cfg.kind {
        ExperimentKind::FrontLaw | ExperimentKind::Heterogeneous => {
            let r = dir.stage("simulate+fit", || experiment::front_law(cfg)).map_err(stage("front_law"))?;
            dir.write("levels.csv", &io::levels_csv(&r.curves))?;
            let svg = front_plot(&r.curves, cfg.frame.c_star, r.fit.k_fit)?;
            dir.write("front.svg", &svg)?;
            let pass = r.k_within_band && r.trapped;
            dir.write_json(
                "report.json",
                &json!({
                    "kind": cfg.kind,
                    "k_fit": r.fit.k_fit,
                    "c_fit": r.fit.c_fit,
                    "fit": r.fit,
                    "fit_alt": r.fit_alt,
                    "k_target": r.k_target,
                    "trapping_spread": r.trapping_spread,
                    "max_seen": r.max_seen,
                    "pass": { "k_within_band": r.k_within_band, "trapped": r.trapped, "all": pass },
                }),
            )?;
            dir.manifest.pass = pass;
        }
        ExperimentKind::Selfsim => {
            let r = dir.stage("simulate+transform", || experiment::selfsim(cfg)).map_err(stage("selfsim"))?;
            let last = r.records.last().expect("selfsim returns at least one record");
            dir.write("w.csv", &io::selfsim_csv(&last.snapshot))?;
            dir.write("alpha.csv", &io::alpha_csv(&last.alpha_projection, &last.s_inf))?;
            if last.alpha_projection.alpha.len() > 1 {
                let a = &last.alpha_projection;
                let svg = emit_plot(
                    &[Series::new("alpha", a.theta.clone(), a.alpha.clone())],
                    &PlotStyle {
                        kind: PlotKind::Polar,
                        ..PlotStyle::lines("alpha(theta)", "", "")
                    },
                )?;
                dir.write("alpha.svg", &svg)?;
            }
            let pass = r.errors_decreasing && r.final_relative_error <= 0.05 && r.final_method_gap <= 0.02;
            dir.write_json(
                "report.json",
                &json!({
                    "kind": cfg.kind,
                    "result": r,
                    "pass": { "all": pass },
                }),
            )?;
            dir.manifest.pass = pass;
        }
        ExperimentKind::Barriers => {
            let r = dir.stage("barriers", || experiment::barriers(cfg)).map_err(stage("barriers"))?;
            let pass = match &r {
                BarrierOutcome::Qzeta(tr) => {
                    dir.write("qzeta.csv", &io::qzeta_csv(tr))?;
                    let inv = tr.invariants(1e-12);
                    inv.q_positive && inv.zeta_monotone
                }
                BarrierOutcome::Lemma31 { pass, .. } => *pass,
                BarrierOutcome::Certify(c) => c.pass,
            };
            dir.write_json("report.json", &json!({ "kind": cfg.kind, "result": r, "pass": { "all": pass } }))?;
            dir.manifest.pass = pass;
        }
        ExperimentKind::Spreading => {
            let r = dir.stage("simulate", || experiment::spreading(cfg)).map_err(stage("spreading"))?;
            dir.write_json("report.json", &json!({ "kind": cfg.kind, "result": r }))?;
        }
    }
    Ok(dir.finish()?)
}

/// `r_λ(t) − c*t` against `ln t`, annotated with the fitted slope.
pub fn front_plot(curves: &[kpp_core::analysis::LevelCurve], c_star: f64, k_fit: f64) -> Result<String, PlotError> {
    let x: Vec<f64> = curves.iter().map(|c| c.t.ln()).collect();
    let y: Vec<f64> = curves.iter().map(|c| c.mean() - c_star * c.t).collect();
    let mut style = PlotStyle::lines("front position", "ln t", "r_lambda - c* t");
    style.annotation = Some(format!("slope -k_fit = {:.4}", -k_fit));
    emit_plot(&[Series::new("r_lambda - c* t", x, y)], &style)
}
