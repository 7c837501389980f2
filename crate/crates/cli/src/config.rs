//! Flat `section.key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored; a trailing `# ...`
//! after a value is a comment. Keys may appear once. Lists are
//! comma-separated.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use kpp_core::frames::{FrameParams, DEFAULT_DELTA, DEFAULT_XI_MAX};
use kpp_core::model::{AngularShape, DatumKind, Heterogeneity, InitialDatum, Nonlinearity};
use kpp_core::solver::{default_dt, Geometry, SolverConfig, TimeScheme, WindowPolicy};
use kpp_core::analysis::FrontModel;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("key `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("unknown keys: {0}")]
    Unknown(String),
    #[error("{stage}: {source}")]
    Invalid {
        stage: &'static str,
        #[source]
        source: kpp_core::Error,
    },
}

#[derive(Debug, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                msg: "expected `section.key = value`".into(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            let valid = k.split_once('.').is_some_and(|(s, key)| {
                !s.is_empty()
                    && !key.is_empty()
                    && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
            });
            if !valid {
                return Err(ConfigError::Syntax {
                    line: n + 1,
                    msg: format!("malformed key `{k}`"),
                });
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::Syntax {
                    line: n + 1,
                    msg: format!("duplicate key `{k}`"),
                });
            }
        }
        Ok(KvConfig {
            entries,
            used: RefCell::default(),
        })
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    /// Canonical text: sorted keys, one per line.
    pub fn echo(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(String::as_str)
    }

    fn err(key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(key)
            .map(|v| v.parse::<f64>().map_err(|e| Self::err(key, e.to_string())))
            .transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        self.raw(key)
            .map(|v| v.parse::<usize>().map_err(|e| Self::err(key, e.to_string())))
            .transpose()
            .map(|v| v.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        self.raw(key)
            .map(|v| v.parse::<bool>().map_err(|e| Self::err(key, e.to_string())))
            .transpose()
            .map(|v| v.unwrap_or(default))
    }

    pub fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|e| Self::err(key, e.to_string())))
                .collect(),
        }
    }

    /// Fails on keys never looked up.
    pub fn reject_unknown(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        let unknown: Vec<&str> = self
            .entries
            .keys()
            .filter(|k| !used.contains(*k))
            .map(String::as_str)
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Unknown(unknown.join(", ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FrontLaw,
    Selfsim,
    Barriers,
    Heterogeneous,
    Spreading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierMode {
    Qzeta,
    Lemma31,
    Certify,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct FitConfig {
    pub t_lo: f64,
    pub t_hi: f64,
    pub every: f64,
    pub level: f64,
    pub model: FrontModel,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SelfSimConfig {
    pub times: Vec<f64>,
    pub xi_max: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct BarrierConfig {
    pub mode: BarrierMode,
    pub c: f64,
    pub c_suff: f64,
    pub q0: f64,
    pub zeta0: f64,
    pub tau_max: f64,
    pub dtau: f64,
    /// Number of geometrically spaced snapshot times in `[1, t_end]`.
    pub snapshots: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SpreadingConfig {
    pub time: f64,
    pub inner: Vec<f64>,
    pub outer: Vec<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub out: PathBuf,
    pub solver: SolverConfig,
    pub frame: FrameParams,
    pub fit: FitConfig,
    pub selfsim: SelfSimConfig,
    pub barriers: BarrierConfig,
    pub spreading: SpreadingConfig,
    /// Canonical echo of the source text.
    pub echo: String,
}

fn core(stage: &'static str) -> impl Fn(kpp_core::Error) -> ConfigError {
    move |source| ConfigError::Invalid { stage, source }
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        Self::from_kv(&KvConfig::parse(text)?)
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self, ConfigError> {
        let kind = match kv.str_or("experiment.kind", "front_law") {
            "front_law" => ExperimentKind::FrontLaw,
            "selfsim" => ExperimentKind::Selfsim,
            "barriers" => ExperimentKind::Barriers,
            "heterogeneous" => ExperimentKind::Heterogeneous,
            "spreading" => ExperimentKind::Spreading,
            other => return Err(KvConfig::err("experiment.kind", format!("unknown kind `{other}`"))),
        };
        let seed = kv.usize_or("experiment.seed", 0)? as u64;
        let out = PathBuf::from(kv.str_or("experiment.out", "out"));

        let n = kv.usize_or("geometry.n", 1)? as u32;
        let geometry = match kv.str_or("geometry.kind", "line") {
            "line" => Geometry::Line,
            "radial" => Geometry::Radial { n },
            "polar" => Geometry::Polar2d {
                n_theta: kv.usize_or("geometry.n_theta", 64)?,
            },
            other => return Err(KvConfig::err("geometry.kind", format!("unknown geometry `{other}`"))),
        };
        geometry.validate().map_err(core("geometry"))?;

        let nl = match kv.str_or("reaction.kind", "kpp") {
            "kpp" => Nonlinearity::QuadraticKpp,
            "general" => Nonlinearity::general(kv.list_or("reaction.coeffs", &[1.0, 1.0])?).map_err(core("reaction"))?,
            other => return Err(KvConfig::err("reaction.kind", format!("unknown reaction `{other}`"))),
        };
        let het = Heterogeneity::new(
            kv.f64_or("hetero.lambda", 0.0)?,
            kv.f64_or("hetero.alpha", 1.0)?,
            kv.f64_or("hetero.crossover", 1.0)?,
        )
        .map_err(core("hetero"))?;

        let datum_kind = match kv.str_or("init.kind", "ball") {
            "ball" => DatumKind::Ball,
            "blob" => DatumKind::Blob,
            other => return Err(KvConfig::err("init.kind", format!("unknown datum `{other}`"))),
        };
        let shape = match datum_kind {
            DatumKind::Ball => AngularShape::constant(kv.f64_or("init.rho", 1.5)?),
            DatumKind::Blob => {
                AngularShape::from_coefficients(&kv.list_or("init.shape", &[1.5, 0.3])?).map_err(core("init"))?
            }
        };
        let init = InitialDatum::new(
            datum_kind,
            kv.f64_or("init.r1", 1.0)?,
            kv.f64_or("init.r2", 2.0)?,
            shape,
            kv.f64_or("init.smoothing", 0.0)?,
        )
        .map_err(core("init"))?;

        let dr = kv.f64_or("solver.dr", 0.05)?;
        let mut solver = SolverConfig::new(geometry, dr, init);
        if dr > 0.0 {
            solver.dt = kv.f64_or("solver.dt", default_dt(dr, &geometry))?;
        }
        solver.nl = nl;
        solver.het = het;
        solver.t_end = kv.f64_or("solver.t_end", 100.0)?;
        solver.angular_interval = kv.usize_or("solver.angular_interval", 1)?;
        solver.record_times = kv.list_or("solver.record_times", &[solver.t_end])?;
        solver.scheme = match kv.str_or("solver.scheme", "explicit") {
            "explicit" => TimeScheme::ExplicitRk2,
            "semi_implicit" => TimeScheme::SemiImplicit,
            other => return Err(KvConfig::err("solver.scheme", format!("unknown scheme `{other}`"))),
        };
        solver.window_width = kv.f64_or("window.width", 400.0)?;
        solver.window_policy = match kv.str_or("window.policy", "comoving") {
            "fixed" => WindowPolicy::Fixed,
            "comoving" => WindowPolicy::CoMoving {
                anchor_level: kv.f64_or("window.anchor_level", 0.5)?,
                margin_back: kv.f64_or("window.margin_back", 150.0)?,
                margin_front: kv.f64_or("window.margin_front", 250.0)?,
            },
            other => return Err(KvConfig::err("window.policy", format!("unknown policy `{other}`"))),
        };
        solver.validate().map_err(core("solver"))?;

        let delta = kv.f64_or("frame.delta", DEFAULT_DELTA)?;
        // reference frame; the heterogeneous shift is only defined for alpha >= 1
        let base = if het.is_homogeneous() || het.alpha < 1.0 {
            FrameParams::homogeneous(geometry.dimension())
        } else {
            FrameParams::heterogeneous(geometry.dimension(), het.lambda, het.alpha)
        }
        .map_err(core("frame"))?;
        let c_star = solver.nl.c_star();
        let mut frame = FrameParams::new(base.n, base.k * 2.0 / c_star, c_star, delta, base.lambda_het)
            .map_err(core("frame"))?;
        if kv.bool_or("frame.grid_matched", true)? {
            frame = frame.matched_to_grid(solver.dr).map_err(core("frame"))?;
        }

        let fit = FitConfig {
            t_lo: kv.f64_or("fit.t_lo", (0.1 * solver.t_end).max(1.0))?,
            t_hi: kv.f64_or("fit.t_hi", solver.t_end)?,
            every: kv.f64_or("fit.every", 10.0)?,
            level: kv.f64_or("fit.level", 0.5)?,
            model: match kv.str_or("fit.model", "ct_klnt_s_bsqrt") {
                "ct_klnt_s" => FrontModel::CtKlntS,
                "ct_klnt_s_bsqrt" => FrontModel::CtKlntSBsqrt,
                other => return Err(KvConfig::err("fit.model", format!("unknown model `{other}`"))),
            },
        };
        if !(fit.every > 0.0 && fit.t_lo >= 1.0 && fit.t_hi > fit.t_lo && fit.t_hi <= solver.t_end) {
            return Err(KvConfig::err("fit", "need 1 <= t_lo < t_hi <= t_end and every > 0"));
        }
        if !(fit.level > 0.0 && fit.level < 1.0) {
            return Err(KvConfig::err("fit.level", "must lie in (0, 1)"));
        }
        let selfsim = SelfSimConfig {
            times: kv.list_or("selfsim.times", &[solver.t_end])?,
            xi_max: kv.f64_or("selfsim.xi_max", DEFAULT_XI_MAX)?,
        };
        if selfsim.times.iter().any(|&t| !(t >= 1.0 && t <= solver.t_end)) {
            return Err(KvConfig::err("selfsim.times", "times must lie in [1, t_end]"));
        }
        let c = kv.f64_or("barriers.c", 1.0)?;
        let barriers = BarrierConfig {
            mode: match kv.str_or("barriers.mode", "certify") {
                "qzeta" => BarrierMode::Qzeta,
                "lemma31" => BarrierMode::Lemma31,
                "certify" => BarrierMode::Certify,
                other => return Err(KvConfig::err("barriers.mode", format!("unknown mode `{other}`"))),
            },
            c,
            c_suff: kv.f64_or("barriers.c_suff", 0.05)?,
            q0: kv.f64_or("barriers.q0", 1.0)?,
            zeta0: kv.f64_or("barriers.zeta0", 1.0)?,
            tau_max: kv.f64_or("barriers.tau_max", 30.0)?,
            dtau: kv.f64_or("barriers.dtau", 1e-2)?,
            snapshots: kv.usize_or("barriers.snapshots", 40)?,
        };
        let spreading = SpreadingConfig {
            time: kv.f64_or("spreading.time", solver.t_end)?,
            inner: kv.list_or("spreading.inner", &[0.0, 1.8])?,
            outer: kv.list_or("spreading.outer", &[2.2])?,
        };
        if !(spreading.time >= 1.0 && spreading.time <= solver.t_end) {
            return Err(KvConfig::err("spreading.time", "must lie in [1, t_end]"));
        }
        kv.reject_unknown()?;
        Ok(ExperimentConfig {
            kind,
            seed,
            out,
            solver,
            frame,
            fit,
            selfsim,
            barriers,
            spreading,
            echo: kv.echo(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let kv = KvConfig::parse("# run\nsolver.dr = 0.1 # coarse\n\nselfsim.times = 10, 20,40\n").unwrap();
        assert_eq!(kv.f64_or("solver.dr", 0.0).unwrap(), 0.1);
        assert_eq!(kv.list_or("selfsim.times", &[]).unwrap(), vec![10.0, 20.0, 40.0]);
        assert_eq!(kv.echo(), "selfsim.times = 10, 20,40\nsolver.dr = 0.1\n");
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(KvConfig::parse("solver.dr 0.1"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(KvConfig::parse("dr = 0.1").is_err());
        assert!(KvConfig::parse("a.b = 1\na.b = 2").is_err());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = ExperimentConfig::from_text("solver.dr = 0.1\nsolver.typo = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Unknown(k) if k == "solver.typo"));
    }

    #[test]
    fn unstable_step_is_a_solver_stage_error() {
        let err = ExperimentConfig::from_text("solver.dr = 0.1\nsolver.dt = 0.1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { stage: "solver", .. }), "{err}");
    }

    #[test]
    fn defaults_build() {
        let cfg = ExperimentConfig::from_text("").unwrap();
        assert_eq!(cfg.kind, ExperimentKind::FrontLaw);
        assert_eq!(cfg.frame.k, 1.5);
    }
}
