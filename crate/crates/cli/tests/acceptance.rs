//! Acceptance experiments A1–A10. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails. Pass criterion ids as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- A6 A9`.

use std::process::ExitCode;
use std::time::Instant;

use kpp_cli::config::ExperimentConfig;
use kpp_cli::experiment::{
    analyse_snapshot, angular_consistency, certify, front_law, lemma31_doubling_ratio, lemma31_grid, minimal_wave,
    oscillation_trend, schedule, simulate, spreading, SelfsimRecord,
};
use kpp_cli::run::run_experiment;
use kpp_core::analysis::{fit_front_law, level_position, lipschitz_estimate, FrontModel, LevelCurve};
use kpp_core::frames::{apply_operator, eigen_data, h_eval, phi0, varphi0, FrameParams, OperatorKind, DEFAULT_A0};
use kpp_core::model::{InitialDatum, Nonlinearity};
use kpp_core::solver::{Geometry, SolutionField, Solver, SolverConfig, WindowPolicy};
use kpp_core::wave::{affine_tail_fit, fit_tail_constant, solve_profile};
use kpp_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

// Shared settings of the long front runs.
const FRONT_RUN: &str = "\
solver.dr = 0.05
solver.t_end = 2000
window.width = 300
window.margin_back = 40
window.margin_front = 250
init.r1 = 1
init.r2 = 2
fit.t_lo = 200
fit.t_hi = 2000
fit.every = 10
fit.level = 0.5
fit.model = ct_klnt_s_bsqrt
";

fn config(extra: &str) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    Ok(ExperimentConfig::from_text(&format!("{FRONT_RUN}{extra}"))?)
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn a1() -> Outcome {
    let dir = tempfile::tempdir()?;
    let mut cfg = config("experiment.kind = front_law\ngeometry.kind = line\n")?;
    cfg.out = dir.path().to_path_buf();
    run_experiment(&cfg)?;
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json"))?)?;
    let k = report["k_fit"].as_f64().ok_or("report lacks k_fit")?;
    let c = report["c_fit"].as_f64().ok_or("report lacks c_fit")?;
    let files_ok = ["levels.csv", "front.svg", "manifest.json"].iter().all(|f| dir.path().join(f).exists());
    Ok((
        within(k, 1.35, 1.65) && within(c, 1.98, 2.02) && files_ok,
        format!("k_fit = {k:.4} in [1.35, 1.65], c_fit = {c:.5} in [1.98, 2.02], artifacts written = {files_ok}"),
    ))
}

/// Radial N=2 front law plus the self-similar convergence records at
/// t = 100, 400, 1600, all taken from one run.
struct RadialTwo {
    k_fit: f64,
    records: Vec<SelfsimRecord>,
}

fn radial_two() -> Result<RadialTwo, Box<dyn std::error::Error>> {
    let cfg = config("geometry.kind = radial\ngeometry.n = 2\n")?;
    let wave = minimal_wave(&cfg)?;
    let fit_times = schedule(cfg.fit.t_lo, cfg.fit.t_hi, cfg.fit.every);
    let selfsim_times = [100.0, 400.0, 1600.0];
    let mut times: Vec<f64> = fit_times.iter().chain(&selfsim_times).copied().collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut curves = Vec::new();
    let mut records = Vec::new();
    simulate(&cfg.solver, &times, |f| {
        if fit_times.contains(&f.t) {
            curves.push(level_position(f, cfg.fit.level)?);
        }
        if selfsim_times.contains(&f.t) {
            records.push(analyse_snapshot(f, &cfg.frame, cfg.selfsim.xi_max, &wave, cfg.fit.level)?);
        }
        Ok(())
    })?;
    let fit = fit_front_law(&curves, FrontModel::CtKlntSBsqrt)?;
    Ok(RadialTwo { k_fit: fit.k_fit, records })
}

fn a2(r2: &RadialTwo) -> Outcome {
    let cfg = config("geometry.kind = radial\ngeometry.n = 3\n")?;
    let k3 = front_law(&cfg)?.fit.k_fit;
    let k2 = r2.k_fit;
    Ok((
        within(k2, 1.8, 2.2) && within(k3, 2.25, 2.75),
        format!("N=2 k_fit = {k2:.4} in [1.8, 2.2]; N=3 k_fit = {k3:.4} in [2.25, 2.75]"),
    ))
}

fn a3() -> Outcome {
    let het = |alpha: f64| -> Result<f64, Box<dyn std::error::Error>> {
        let cfg = config(&format!(
            "geometry.kind = radial\ngeometry.n = 2\nhetero.lambda = 1\nhetero.alpha = {alpha}\nhetero.crossover = 1\n"
        ))?;
        Ok(front_law(&cfg)?.fit.k_fit)
    };
    let k1 = het(1.0)?;
    let k2 = het(2.0)?;
    Ok((
        within(k1, 1.3, 1.7) && within(k2, 1.8, 2.2),
        format!("alpha=1 k_fit = {k1:.4} in [1.3, 1.7]; alpha=2 k_fit = {k2:.4} in [1.8, 2.2]"),
    ))
}

const POLAR_RUN: &str = "\
geometry.kind = polar
init.kind = blob
init.shape = 1.5, 0.3
init.r1 = 1
init.r2 = 2
solver.dr = 0.2
solver.scheme = semi_implicit
solver.dt = 0.02
solver.angular_interval = 10
solver.t_end = 1000
window.width = 300
window.margin_back = 40
window.margin_front = 250
";

fn polar(n_theta: usize, oscillation_times: &[f64]) -> Result<(SelfsimRecord, Vec<LevelCurve>), Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::from_text(&format!("{POLAR_RUN}geometry.n_theta = {n_theta}\n"))?;
    let wave = minimal_wave(&cfg)?;
    let mut times = oscillation_times.to_vec();
    times.push(cfg.solver.t_end);
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut curves = Vec::new();
    let mut last = None;
    simulate(&cfg.solver, &times, |f| {
        if oscillation_times.contains(&f.t) {
            curves.push(level_position(f, cfg.fit.level)?);
        }
        if f.t == cfg.solver.t_end {
            last = Some(analyse_snapshot(f, &cfg.frame, cfg.selfsim.xi_max, &wave, cfg.fit.level)?);
        }
        Ok(())
    })?;
    Ok((last.ok_or("final snapshot missing")?, curves))
}

fn a4() -> Outcome {
    let osc_times = schedule(100.0, 1000.0, 50.0);
    let (coarse, curves) = polar(64, &osc_times)?;
    let (fine, _) = polar(128, &[])?;
    let (spread_shift, spread_r) = angular_consistency(&coarse);
    let consistent = spread_shift <= 0.2 * spread_r;
    let trend = oscillation_trend(&curves);
    let l64 = lipschitz_estimate(&coarse.alpha_projection)?;
    let l128 = lipschitz_estimate(&fine.alpha_projection)?;
    let lip_rel = (l128 - l64).abs() / l64;
    Ok((
        consistent && trend.bounded && lip_rel <= 0.25,
        format!(
            "(i) stdev[r - ln alpha] = {spread_shift:.4} <= 0.2 * {spread_r:.4}; \
             (ii) decade growth {:.4} vs mean {:.4}, max/first {:.3}; \
             (iii) Lipschitz {l64:.4} (64) vs {l128:.4} (128), rel {lip_rel:.3} <= 0.25",
            trend.decade_growth,
            trend.mean,
            trend.values.iter().copied().fold(0.0, f64::max) / trend.values[0],
        ),
    ))
}

fn a5(r2: &RadialTwo) -> Outcome {
    let errs: Vec<f64> = r2.records.iter().map(|r| r.error).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let last = r2.records.last().ok_or("no self-similar records")?;
    let rel = last.error / last.scale;
    Ok((
        decreasing && rel <= 0.05 && last.method_gap <= 0.02,
        format!(
            "weighted errors {} strictly decreasing = {decreasing}; final {rel:.4} of sup(alpha phi0) <= 0.05; \
             slope/projection gap {:.4} <= 0.02",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", "),
            last.method_gap
        ),
    ))
}

fn a6() -> Outcome {
    let grid = lemma31_grid(60.0)?;
    let ratio = lemma31_doubling_ratio(&grid);
    let passed = grid.iter().filter(|r| r.pass).count();
    let k_max = grid.iter().map(|r| r.k_est).fold(0.0, f64::max);
    Ok((
        passed == grid.len() && ratio <= 8.0,
        format!(
            "{passed}/{} grid points pass; max K_est = {k_max:.3}; max K_est(2q0)/K_est(q0) = {ratio:.3} <= 8",
            grid.len()
        ),
    ))
}

fn a7() -> Outcome {
    let cfg = ExperimentConfig::from_text(
        "experiment.kind = barriers\nbarriers.mode = certify\ngeometry.kind = radial\ngeometry.n = 2\n\
         solver.dr = 0.05\nsolver.t_end = 400\nwindow.width = 300\nwindow.margin_back = 40\n\
         window.margin_front = 250\nbarriers.snapshots = 40\n",
    )?;
    let r = certify(&cfg)?;
    let (sup, sub) = (&r.supersolution, &r.subsolution);
    let worst = sup.conditions.worst.min().min(sub.conditions.worst.min());
    Ok((
        r.pass && sup.sandwich.violations == 0 && sub.sandwich.violations == 0 && worst >= -1e-10,
        format!(
            "{} snapshots; violations super {} / sub {} over {} nodes; worst condition margin {worst:.3e} >= -1e-10",
            r.snapshot_times.len(),
            sup.sandwich.violations,
            sub.sandwich.violations,
            sup.sandwich.grid_points,
        ),
    ))
}

fn a8() -> Outcome {
    let nl = Nonlinearity::QuadraticKpp;
    let fine = solve_profile(&nl, 2.0, 0.02, 1e-10)?;
    let coarse = solve_profile(&nl, 2.0, 0.04, 1e-10)?;
    let order = (coarse.residual / fine.residual).log2();
    let residual_ok = fine.residual < 1e-8 && order >= 1.9;

    // [8, 12] in the unit-amplitude convention (x + K)e^{-x}
    let ln_a = fine.tail.ok_or("minimal wave without tail fit")?.s_norm();
    let window = (8.0 + ln_a, 12.0 + ln_a);
    let (amp, intercept, rel) = affine_tail_fit(&fine, window)?;
    let (amp1, intercept1, _) = affine_tail_fit(&fine, (window.0 + 1.0, window.1 + 1.0))?;
    let k = intercept / amp + ln_a;
    let k_shift = intercept1 / amp1 + ln_a;
    let drift = (k_shift - k).abs();
    let tail_ok = rel < 1e-3 && drift <= 1e-2;
    let default_tail = fine.tail.ok_or("minimal wave without tail fit")?;

    let az = 5.0 / 6f64.sqrt();
    let az_ok = match (solve_profile(&nl, az, 0.02, 1e-10), solve_profile(&nl, 1.9, 0.02, 1e-10)) {
        (Ok(w), Err(Error::BelowMinimalSpeed { .. })) => {
            !w.is_minimal_speed() && matches!(fit_tail_constant(&w, window), Err(Error::NotMinimalSpeed { .. }))
        }
        _ => false,
    };
    Ok((
        residual_ok && tail_ok && az_ok,
        format!(
            "residual {:.2e} < 1e-8, order {order:.2} >= 1.9; tail on [{:.3}, {:.3}]: rel {rel:.2e} < 1e-3, \
             K_tail {k:.4} -> {k_shift:.4} after shift 1, drift {drift:.4} <= 1e-2; \
             diagnostic window [{:.2}, {:.2}]: rel {:.1e}, K_tail {:.4}; \
             c = 5/sqrt6 supercritical and c = 1.9 rejected = {az_ok}",
            fine.residual,
            window.0,
            window.1,
            default_tail.window.0,
            default_tail.window.1,
            default_tail.rel_residual,
            default_tail.k_tail,
        ),
    ))
}

fn operator_residual(kind: OperatorKind, dxi: f64) -> Result<f64, Error> {
    let f = match kind {
        OperatorKind::L => phi0,
        OperatorKind::M => varphi0,
    };
    let n = (8.0 / dxi).round() as usize + 1;
    let w: Vec<f64> = (0..n).map(|j| f(j as f64 * dxi)).collect();
    let out = apply_operator(kind, &w, 0.0, dxi)?;
    Ok(out.values.iter().fold(0.0, |m, v| m.max(v.abs())))
}

fn a9() -> Outcome {
    let order = |kind| -> Result<f64, Error> {
        Ok((operator_residual(kind, 0.02)? / operator_residual(kind, 0.01)?).log2())
    };
    let (ol, om) = (order(OperatorKind::L)?, order(OperatorKind::M)?);

    let eig = eigen_data(DEFAULT_A0)?;
    let lambda_ok = (eig.lambda1 - 100.0).abs() <= 1e-12 * 100.0;
    let sqrt_l = eig.lambda1.sqrt();
    let grad_ok = (0..=1000).all(|i| {
        let xi = 0.5 * DEFAULT_A0 * i as f64 / 1000.0;
        eig.phi1_prime(xi).abs() <= sqrt_l * eig.phi1(xi) * (1.0 + 1e-12)
    });

    // sup |h + 3/2| e^{δτ} on ξ ∈ [0, e^{(1/2−δ)τ}] must not grow with τ
    let p = FrameParams::homogeneous(2)?;
    let mut consts = Vec::new();
    for tau in [5.0, 10.0, 15.0] {
        let top = ((0.5 - p.delta) * tau).exp();
        let mut sup: f64 = 0.0;
        for i in 0..=2000 {
            let xi = top * i as f64 / 2000.0;
            sup = sup.max((h_eval(tau, xi, &p)? + 1.5).abs());
        }
        consts.push(sup * (p.delta * tau).exp());
    }
    let c = consts.iter().copied().fold(0.0, f64::max);
    let spread = c / consts.iter().copied().fold(f64::INFINITY, f64::min);
    let h_ok = c.is_finite() && spread <= 2.0;
    Ok((
        ol >= 1.9 && om >= 1.9 && lambda_ok && grad_ok && h_ok,
        format!(
            "order L {ol:.3}, M {om:.3} >= 1.9; lambda1(pi/20) = {} ; |phi1'| <= sqrt(lambda1) phi1 = {grad_ok}; \
             sup|h+3/2| e^(delta tau) = {} (single C = {c:.4}, max/min {spread:.3} <= 2)",
            eig.lambda1,
            consts.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn fixed_line(width: f64) -> Result<SolverConfig, Error> {
    let mut cfg = SolverConfig::new(Geometry::Line, 0.1, InitialDatum::ball(1.0, 2.0, 1.5)?);
    cfg.window_width = width;
    cfg.window_policy = WindowPolicy::Fixed;
    Ok(cfg)
}

fn states(cfg: &SolverConfig, values: Vec<f64>, times: &[f64]) -> Result<Vec<SolutionField>, Error> {
    let mut s = Solver::with_values(cfg.clone(), values)?;
    let mut out = Vec::new();
    for &t in times {
        s.advance(t)?;
        out.push(s.record());
    }
    Ok(out)
}

fn a10() -> Outcome {
    // comparison on random ordered pairs
    let cfg = fixed_line(80.0)?;
    let n = cfg.n_r();
    let times = [2.0, 5.0, 10.0];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut ordered = 0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..20 {
        // sums of Gaussian bumps inside r < 20; the upper datum adds more bumps
        let mut bump = |v: &mut [f64]| {
            let (c, w, h) = (rng.random_range(0.0..15.0), rng.random_range(0.5..3.0), rng.random_range(0.0..1.0));
            for (i, x) in v.iter_mut().enumerate() {
                let r = i as f64 * cfg.dr;
                *x = f64::max(*x, h * (-((r - c) / w).powi(2)).exp());
            }
        };
        let mut a = vec![0.0; n];
        for _ in 0..3 {
            bump(&mut a);
        }
        let mut b = a.clone();
        for _ in 0..2 {
            bump(&mut b);
        }
        let ua = states(&cfg, a, &times)?;
        let ub = states(&cfg, b, &times)?;
        if ua.iter().zip(&ub).all(|(x, y)| x.values.iter().zip(&y.values).all(|(p, q)| *p <= *q + 1e-14)) {
            ordered += 1;
        }
        for f in ua.iter().chain(&ub) {
            lo = lo.min(f.min_value());
            hi = hi.max(f.max_value());
        }
    }
    let bounds_ok = lo >= 0.0 && hi <= 1.0 + 1e-12;

    // spreading at t = 200
    let sp = spreading(&ExperimentConfig::from_text(
        "experiment.kind = spreading\ngeometry.kind = radial\ngeometry.n = 2\nsolver.dr = 0.05\n\
         window.width = 300\nwindow.margin_back = 40\nwindow.margin_front = 250\n\
         solver.t_end = 200\nspreading.time = 200\nspreading.inner = 1.8\nspreading.outer = 2.2\n",
    )?)?;
    let inner = sp.inner[0].1;
    let outer = sp.outer[0].1;
    let spread_ok = inner >= 0.99 && outer <= 1e-3;

    // polar with isotropic data against the radial N=2 solver
    let run = |geometry: Geometry| -> Result<SolutionField, Error> {
        let mut c = SolverConfig::new(geometry, 0.1, InitialDatum::ball(1.0, 2.0, 1.5)?);
        c.window_width = 40.0;
        c.window_policy = WindowPolicy::Fixed;
        c.t_end = 10.0;
        let mut s = Solver::new(c)?;
        s.advance(10.0)?;
        Ok(s.record())
    };
    let radial = run(Geometry::Radial { n: 2 })?;
    let polar = run(Geometry::Polar2d { n_theta: 16 })?;
    let gap = (0..polar.n_theta)
        .flat_map(|j| polar.row(j).iter().zip(radial.row(0)).map(|(p, r)| (p - r).abs()))
        .fold(0.0, f64::max);

    Ok((
        ordered == 20 && bounds_ok && spread_ok && gap <= 1e-6,
        format!(
            "comparison held on {ordered}/20 pairs; min u = {lo:.3e}, max u - 1 = {:.1e} <= 1e-12; \
             t=200 inner(1.8) = {inner:.6} >= 0.99, outer(2.2) = {outer:.2e} <= 1e-3; polar vs radial {gap:.2e} <= 1e-6",
            hi - 1.0
        ),
    ))
}

fn report(id: &str, start: Instant, outcome: Outcome) -> bool {
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok((pass, detail)) => {
            println!("{id} {} [{secs:.0}s] {detail}", if pass { "PASS" } else { "FAIL" });
            pass
        }
        Err(e) => {
            println!("{id} FAIL [{secs:.0}s] error: {e}");
            false
        }
    }
}

fn main() -> ExitCode {
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('A')).collect();
    let want = |id: &str| selected.is_empty() || selected.iter().any(|s| s == id);
    let mut failed = 0;

    if want("A1") {
        failed += usize::from(!report("A1", Instant::now(), a1()));
    }
    if want("A2") || want("A5") {
        let start = Instant::now();
        let shared = radial_two().map_err(|e| e.to_string());
        let ids: [(&str, fn(&RadialTwo) -> Outcome); 2] = [("A2", a2), ("A5", a5)];
        for (id, f) in ids {
            if want(id) {
                let outcome = match &shared {
                    Ok(r2) => f(r2),
                    Err(e) => Err(e.clone().into()),
                };
                failed += usize::from(!report(id, start, outcome));
            }
        }
    }
    let rest: [(&str, fn() -> Outcome); 7] = [
        ("A3", a3),
        ("A4", a4),
        ("A6", a6),
        ("A7", a7),
        ("A8", a8),
        ("A9", a9),
        ("A10", a10),
    ];
    for (id, f) in rest {
        if want(id) {
            failed += usize::from(!report(id, Instant::now(), f()));
        }
    }

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
