use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use kpp_cli::config::{ExperimentConfig, KvConfig};
use kpp_cli::experiment::{self, analyse_snapshot};
use kpp_cli::io;
use kpp_cli::manifest::RunDir;
use kpp_cli::run::{self, stage, RunError, EXIT_ACCEPTANCE};
use kpp_core::analysis::{fit_front_law, level_position, FrontModel};
use kpp_core::frames::{to_selfsim, to_tilted, FrameParams, SelfSimOptions};
use kpp_core::model::Nonlinearity;
use kpp_core::solver::SolutionField;
use kpp_core::wave::solve_profile;
use serde_json::json;

#[derive(Parser)]
#[command(name = "kpplab", version, about = "Fisher-KPP front asymptotics lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Traveling wave profile at speed `c`.
    Wave {
        #[arg(long, default_value_t = 2.0)]
        c: f64,
        #[arg(long, default_value_t = 0.02)]
        dx: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate the PDE and write snapshots at `solver.record_times`.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Change of frame for one snapshot CSV.
    Transform {
        #[arg(long, value_enum, default_value_t = Frame::Selfsim)]
        frame: Frame,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "N", default_value_t = 1)]
        n: u32,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Use the exact speed `c*` instead of the grid-matched one.
        #[arg(long)]
        continuous_frame: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Barrier computations driven by a config file.
    Barriers {
        #[arg(value_enum)]
        mode: Mode,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analyse a directory written by `simulate`.
    Analyze {
        #[arg(value_enum)]
        what: Analysis,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        level: f64,
    },
    /// Re-emit plots from CSV outputs in a run directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Full pipeline for an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Frame {
    Tilted,
    Selfsim,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Qzeta,
    Lemma31,
    Certify,
}

#[derive(Clone, Copy, ValueEnum)]
enum Analysis {
    Front,
    Alpha,
    Sinf,
    Converge,
}

enum Failure {
    Run(RunError),
    Other(anyhow::Error),
    Acceptance,
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::Run(e)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(RunError::Io(e))
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("KPPLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Acceptance) => {
            eprintln!("run finished but pass flags are false");
            ExitCode::from(EXIT_ACCEPTANCE as u8)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentConfig::from_text(&text).map_err(RunError::from)?)
}

fn read_field(path: &Path, n: u32) -> Result<SolutionField, Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    io::parse_snapshot(&text, n).map_err(|e| Failure::Run(RunError::Input(format!("{}: {e}", path.display()))))
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Wave { c, dx, out } => {
            let w = solve_profile(&Nonlinearity::QuadraticKpp, c, dx, 1e-10).map_err(stage("wave"))?;
            fs::write(&out, io::profile_csv(&w))?;
            let sidecar = json!({
                "c": w.c,
                "c_star": w.c_star,
                "dx": w.dx,
                "residual": w.residual,
                "k_tail": w.tail.as_ref().map(|t| t.k_tail),
                "tail": w.tail,
                "s_norm": w.tail.as_ref().map(|t| t.s_norm()),
            });
            fs::write(out.with_extension("json"), serde_json::to_string_pretty(&sidecar).unwrap() + "\n")?;
        }
        Cmd::Simulate { config, out } => {
            let cfg = load_config(&config)?;
            let mut dir = RunDir::create(&out, &cfg.echo)?;
            let mut k = 0;
            let mut files = Vec::new();
            let solver = experiment::simulate(&cfg.solver, &cfg.solver.record_times, |f| {
                files.push((format!("snap_{k:04}.csv"), io::snapshot_csv(f)));
                k += 1;
                Ok(())
            })
            .map_err(stage("simulate"))?;
            for (name, body) in &files {
                dir.write(name, body)?;
            }
            dir.write_json(
                "simulation.json",
                &json!({
                    "geometry": cfg.solver.geometry,
                    "dimension": cfg.solver.geometry.dimension(),
                    "dr": cfg.solver.dr,
                    "dt": cfg.solver.dt,
                    "record_times": cfg.solver.record_times,
                    "window_trajectory": solver.window_trajectory(),
                    "max_seen": solver.max_seen(),
                    "frame": cfg.frame,
                }),
            )?;
            dir.finish()?;
        }
        Cmd::Transform {
            frame,
            input,
            n,
            delta,
            continuous_frame,
            out,
        } => {
            let f = read_field(&input, n)?;
            let p = FrameParams::homogeneous(n)
                .and_then(|p| p.with_delta(delta))
                .and_then(|p| if continuous_frame { Ok(p) } else { p.matched_to_grid(f.dr) })
                .map_err(stage("frame"))?;
            let body = match frame {
                Frame::Selfsim => {
                    io::selfsim_csv(&to_selfsim(&f, &p, &SelfSimOptions::default()).map_err(stage("transform"))?)
                }
                Frame::Tilted => {
                    let tf = to_tilted(&f, &p, f.r_min(), f.r_max()).map_err(stage("transform"))?;
                    let mut s = String::from("t,r_prime,theta,v\n");
                    for j in 0..tf.n_theta {
                        for (i, v) in tf.row(j).iter().enumerate() {
                            s.push_str(&format!("{},{},{},{}\n", f.t, tf.r_prime(i), f.theta(j), v));
                        }
                    }
                    s
                }
            };
            fs::write(&out, body)?;
        }
        Cmd::Barriers { mode, config, out } => {
            let mut kv = match &config {
                Some(p) => KvConfig::parse(&fs::read_to_string(p)?).map_err(RunError::from)?,
                None => KvConfig::default(),
            };
            let mode_name = match mode {
                Mode::Qzeta => "qzeta",
                Mode::Lemma31 => "lemma31",
                Mode::Certify => "certify",
            };
            kv.set("experiment.kind", "barriers");
            kv.set("barriers.mode", mode_name);
            let mut cfg = ExperimentConfig::from_kv(&kv).map_err(RunError::from)?;
            cfg.out = out;
            let m = run::run_experiment(&cfg)?;
            if !m.pass {
                return Err(Failure::Acceptance);
            }
        }
        Cmd::Analyze {
            what,
            input,
            out,
            level,
        } => analyze(what, &input, &out, level)?,
        Cmd::Report { input } => report(&input)?,
        Cmd::Run { config, out } => {
            let mut cfg = load_config(&config)?;
            if let Some(o) = out {
                cfg.out = o;
            }
            let m = run::run_experiment(&cfg)?;
            println!("{}", cfg.out.join("manifest.json").display());
            if !m.pass {
                return Err(Failure::Acceptance);
            }
        }
    }
    Ok(())
}

fn snapshots_in(dir: &Path) -> Result<(Vec<SolutionField>, FrameParams), Failure> {
    let meta: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.join("simulation.json")).context("reading simulation.json")?,
    )
    .context("parsing simulation.json")?;
    let n = meta["dimension"].as_u64().unwrap_or(1) as u32;
    let mut frame: FrameParams = FrameParams::new(
        n,
        meta["frame"]["k"].as_f64().unwrap_or((n as f64 + 2.0) / 2.0),
        meta["frame"]["c_star"].as_f64().unwrap_or(2.0),
        meta["frame"]["delta"].as_f64().unwrap_or(0.1),
        meta["frame"]["lambda_het"].as_f64().unwrap_or(0.0),
    )
    .map_err(stage("frame"))?;
    if let Some(tilt) = meta["frame"]["tilt"].as_f64() {
        frame.tilt = tilt;
    }
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|s| s.to_str())
                .is_some_and(|s| s.starts_with("snap_") && s.ends_with(".csv"))
        })
        .collect();
    names.sort();
    let fields = names.iter().map(|p| read_field(p, n)).collect::<Result<Vec<_>, _>>()?;
    if fields.is_empty() {
        return Err(Failure::Run(RunError::Input(format!("no snapshots in {}", dir.display()))));
    }
    Ok((fields, frame))
}

fn analyze(what: Analysis, input: &Path, out: &Path, level: f64) -> Result<(), Failure> {
    let (fields, frame) = snapshots_in(input)?;
    let dir_out = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let report = match what {
        Analysis::Front => {
            let curves = fields
                .iter()
                .map(|f| level_position(f, level))
                .collect::<Result<Vec<_>, _>>()
                .map_err(stage("level_position"))?;
            fs::write(dir_out.join("levels.csv"), io::levels_csv(&curves))?;
            let f4 = fit_front_law(&curves, FrontModel::CtKlntSBsqrt).map_err(stage("fit"))?;
            let f3 = fit_front_law(&curves, FrontModel::CtKlntS).map_err(stage("fit"))?;
            json!({ "k_target": frame.k, "fit": f4, "fit_alt": f3 })
        }
        Analysis::Alpha | Analysis::Sinf | Analysis::Converge => {
            let wave = solve_profile(&Nonlinearity::QuadraticKpp, frame.c_star, 0.02, 1e-10).map_err(stage("wave"))?;
            let recs = fields
                .iter()
                .map(|f| analyse_snapshot(f, &frame, kpp_core::frames::DEFAULT_XI_MAX, &wave, level))
                .collect::<Result<Vec<_>, _>>()
                .map_err(stage("selfsim"))?;
            let last = recs.last().unwrap();
            fs::write(dir_out.join("alpha.csv"), io::alpha_csv(&last.alpha_projection, &last.s_inf))?;
            match what {
                Analysis::Alpha => json!({
                    "tau": last.tau,
                    "slope": last.alpha_slope,
                    "projection": last.alpha_projection,
                    "method_gap": last.method_gap,
                }),
                Analysis::Sinf => json!({
                    "s_norm": wave.s_norm(),
                    "s_norm_derivation": "U ~ A (x + K) e^{-x} with U(0) = 1/2; s_norm = ln A",
                    "s_inf": last.s_inf,
                }),
                _ => json!({
                    "records": recs.iter().map(|r| json!({
                        "t": r.t, "tau": r.tau, "selfsim_error": r.error, "scale": r.scale,
                        "wave_error": r.wave_error, "method_gap": r.method_gap,
                    })).collect::<Vec<_>>(),
                    "errors_decreasing": recs.windows(2).all(|w| w[1].error < w[0].error),
                }),
            }
        }
    };
    fs::write(out, serde_json::to_string_pretty(&report).unwrap() + "\n")?;
    Ok(())
}

fn read_columns(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let v = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("parsing {}", path.display()))?;
        rows.push(v);
    }
    Ok(rows)
}

fn report(dir: &Path) -> Result<(), Failure> {
    let mut wrote = false;
    let levels = dir.join("levels.csv");
    if levels.exists() {
        let rows = read_columns(&levels)?;
        let mut curves: Vec<kpp_core::analysis::LevelCurve> = Vec::new();
        for r in rows {
            match curves.last_mut() {
                Some(c) if c.t == r[0] => {
                    c.theta.push(r[1]);
                    c.r_of_theta.push(r[2]);
                }
                _ => curves.push(kpp_core::analysis::LevelCurve {
                    t: r[0],
                    level: 0.5,
                    theta: vec![r[1]],
                    r_of_theta: vec![r[2]],
                }),
            }
        }
        let k = fit_front_law(&curves, FrontModel::CtKlntSBsqrt)
            .map(|f| f.k_fit)
            .unwrap_or(f64::NAN);
        let svg = run::front_plot(&curves, 2.0, k).map_err(RunError::from)?;
        fs::write(dir.join("front.svg"), svg)?;
        wrote = true;
    }
    let alpha = dir.join("alpha.csv");
    if alpha.exists() {
        let rows = read_columns(&alpha)?;
        let th: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let al: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        if th.len() >= 2 {
            let svg = kpp_cli::plot::emit_plot(
                &[kpp_cli::plot::Series::new("alpha", th, al)],
                &kpp_cli::plot::PlotStyle {
                    kind: kpp_cli::plot::PlotKind::Polar,
                    ..kpp_cli::plot::PlotStyle::lines("alpha(theta)", "", "")
                },
            )
            .map_err(RunError::from)?;
            fs::write(dir.join("alpha.svg"), svg)?;
            wrote = true;
        }
    }
    if !wrote {
        return Err(Failure::Run(RunError::Input(format!(
            "{} holds neither levels.csv nor a multi-angle alpha.csv",
            dir.display()
        ))));
    }
    Ok(())
}
