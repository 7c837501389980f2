//! Experiment pipelines. Each returns an in-memory result; persistence is
//! handled by [`crate::run::run_experiment`].

use kpp_core::analysis::{
    estimate_alpha, fit_front_law, level_position, lipschitz_estimate, oscillation, s_infinity, selfsim_error,
    spreading_check, trapping_spread, wave_convergence_error, AlphaMethod, AlphaProfile, FrontFit, FrontModel,
    LevelCurve, SpreadSense,
};
use kpp_core::barriers::{
    angular_gradient_constants, certify_sub, certify_super, lemma31_check, solve_qzeta, AutoScaleOptions,
    CertifiedBarrier, CorollaryBounds, Lemma31Report, QZetaTrajectory,
};
use kpp_core::frames::{phi0, to_selfsim, FrameParams, SelfSimOptions, SelfSimSnapshot, DEFAULT_A0};
use kpp_core::solver::{SolutionField, Solver, SolverConfig};
use kpp_core::wave::{solve_profile, WaveProfile};
use kpp_core::{Error, Result};
use serde::Serialize;

use crate::config::{BarrierMode, ExperimentConfig};

/// Relative band around the theoretical `k` for the geometry-law check.
pub const K_BAND: f64 = 0.10;
/// Gärtner trapping: bound on `max − min` of `r̄ − (c*t − k ln t)`.
pub const TRAPPING_BOUND: f64 = 2.0;

/// Runs the solver and hands every snapshot at `times` to `visit`.
pub fn simulate<F>(cfg: &SolverConfig, times: &[f64], mut visit: F) -> Result<Solver>
where
    F: FnMut(&SolutionField) -> Result<()>,
{
    let mut c = cfg.clone();
    c.record_times = times.to_vec();
    c.t_end = times.iter().copied().fold(c.t_end, f64::max);
    let mut s = Solver::new(c)?;
    s.run(|f| visit(f))?;
    Ok(s)
}

pub fn schedule(lo: f64, hi: f64, every: f64) -> Vec<f64> {
    let n = ((hi - lo) / every + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + every * i as f64).collect()
}

/// `n` times spaced geometrically in `[lo, hi]`.
pub fn geometric_times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![hi];
    }
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FrontLawResult {
    pub fit: FrontFit,
    /// Same data under the other model, for transparency.
    pub fit_alt: FrontFit,
    pub k_target: f64,
    pub trapping_spread: f64,
    pub max_seen: f64,
    pub k_within_band: bool,
    pub trapped: bool,
    #[serde(skip)]
    pub curves: Vec<LevelCurve>,
}

pub fn front_law(cfg: &ExperimentConfig) -> Result<FrontLawResult> {
    let times = schedule(cfg.fit.t_lo, cfg.fit.t_hi, cfg.fit.every);
    let mut curves = Vec::with_capacity(times.len());
    let solver = simulate(&cfg.solver, &times, |f| {
        curves.push(level_position(f, cfg.fit.level)?);
        Ok(())
    })?;
    let alt = match cfg.fit.model {
        FrontModel::CtKlntS => FrontModel::CtKlntSBsqrt,
        FrontModel::CtKlntSBsqrt => FrontModel::CtKlntS,
    };
    let fit = fit_front_law(&curves, cfg.fit.model)?;
    let fit_alt = fit_front_law(&curves, alt)?;
    let k_target = cfg.frame.k;
    let trapping = trapping_spread(&curves, cfg.frame.c_star, k_target);
    Ok(FrontLawResult {
        k_within_band: (fit.k_fit - k_target).abs() <= K_BAND * k_target,
        trapped: trapping <= TRAPPING_BOUND,
        fit,
        fit_alt,
        k_target,
        trapping_spread: trapping,
        max_seen: solver.max_seen(),
        curves,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfsimRecord {
    pub t: f64,
    pub tau: f64,
    pub alpha_slope: AlphaProfile,
    pub alpha_projection: AlphaProfile,
    /// Largest relative gap between the two estimates over angles.
    pub method_gap: f64,
    pub error: f64,
    /// `max_Θ α(Θ) · sup φ₀`.
    pub scale: f64,
    pub s_inf: Vec<f64>,
    pub wave_error: f64,
    pub level: LevelCurve,
    #[serde(skip)]
    pub snapshot: SelfSimSnapshot,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfsimResult {
    pub s_norm: f64,
    pub records: Vec<SelfsimRecord>,
    pub errors_decreasing: bool,
    pub final_relative_error: f64,
    pub final_method_gap: f64,
    pub lipschitz: f64,
}

/// `sup_ξ φ₀ = √2 e^{−1/2}`, attained at `ξ = √2`.
pub fn phi0_sup() -> f64 {
    phi0(2f64.sqrt())
}

/// Half-width of the shell around the front used for the wave error.
pub const WAVE_SHELL: f64 = 10.0;

pub fn minimal_wave(cfg: &ExperimentConfig) -> Result<WaveProfile> {
    solve_profile(&cfg.solver.nl, cfg.frame.c_star, 0.02, 1e-10)
}

pub fn analyse_snapshot(
    f: &SolutionField,
    p: &FrameParams,
    xi_max: f64,
    wave: &WaveProfile,
    level: f64,
) -> Result<SelfsimRecord> {
    let snap = to_selfsim(f, p, &SelfSimOptions { xi_max, dxi: None })?;
    let slope = estimate_alpha(&snap, AlphaMethod::Slope)?;
    let proj = estimate_alpha(&snap, AlphaMethod::Projection)?;
    let method_gap = slope
        .alpha
        .iter()
        .zip(&proj.alpha)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);
    let error = selfsim_error(&snap, &proj)?;
    let scale = proj.alpha.iter().copied().fold(0.0, f64::max) * phi0_sup();
    let s_inf = s_infinity(&proj, wave.s_norm())?;
    let curve = level_position(f, level)?;
    let centre = curve.mean();
    let shell = (
        (centre - WAVE_SHELL).max(f.r_min()),
        (centre + WAVE_SHELL).min(f.r_max()),
    );
    let wave_error = wave_convergence_error(f, wave, &s_inf, p, shell)?;
    Ok(SelfsimRecord {
        t: f.t,
        tau: snap.tau,
        alpha_slope: slope,
        alpha_projection: proj,
        method_gap,
        error,
        scale,
        s_inf,
        wave_error,
        level: curve,
        snapshot: snap,
    })
}

pub fn selfsim(cfg: &ExperimentConfig) -> Result<SelfsimResult> {
    let wave = minimal_wave(cfg)?;
    let mut times = cfg.selfsim.times.clone();
    times.sort_by(f64::total_cmp);
    let mut records = Vec::new();
    simulate(&cfg.solver, &times, |f| {
        records.push(analyse_snapshot(f, &cfg.frame, cfg.selfsim.xi_max, &wave, cfg.fit.level)?);
        Ok(())
    })?;
    let last = records.last().ok_or_else(|| Error::NoConvergence("no snapshots recorded".into()))?;
    let lipschitz = if last.alpha_projection.alpha.len() >= 8 {
        lipschitz_estimate(&last.alpha_projection)?
    } else {
        0.0
    };
    Ok(SelfsimResult {
        s_norm: wave.s_norm(),
        errors_decreasing: records.windows(2).all(|w| w[1].error < w[0].error),
        final_relative_error: last.error / last.scale,
        final_method_gap: last.method_gap,
        lipschitz,
        records,
    })
}

pub fn angular_consistency(r: &SelfsimRecord) -> (f64, f64) {
    let la: Vec<f64> = r.alpha_projection.alpha.iter().map(|a| a.ln()).collect();
    let d: Vec<f64> = r.level.r_of_theta.iter().zip(&la).map(|(x, y)| x - y).collect();
    (stdev(&d), stdev(&r.level.r_of_theta))
}

pub fn stdev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct OscillationTrend {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Fitted growth of the oscillation across one decade of `t`.
    pub decade_growth: f64,
    pub mean: f64,
    pub bounded: bool,
}

/// Growth across a decade must stay below 10% of the mean and the maximum
/// below twice the first value.
pub fn oscillation_trend(curves: &[LevelCurve]) -> OscillationTrend {
    let times: Vec<f64> = curves.iter().map(|c| c.t).collect();
    let values: Vec<f64> = curves.iter().map(oscillation).collect();
    let n = values.len() as f64;
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = values.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&values).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let decade_growth = sxy / sxx * std::f64::consts::LN_10;
    let max = values.iter().copied().fold(0.0, f64::max);
    OscillationTrend {
        bounded: decade_growth <= 0.1 * my && max <= 2.0 * values[0],
        decade_growth,
        mean: my,
        times,
        values,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyResult {
    pub snapshot_times: Vec<f64>,
    pub supersolution: CertifiedBarrier,
    pub subsolution: CertifiedBarrier,
    pub corollary: CorollaryBounds,
    pub angular_gradient: Vec<(f64, f64)>,
    pub pass: bool,
}

pub fn certify(cfg: &ExperimentConfig) -> Result<CertifyResult> {
    let times = geometric_times(1.0, cfg.solver.t_end, cfg.barriers.snapshots);
    let xi_max = cfg.selfsim.xi_max;
    let mut snaps = Vec::new();
    // the datum itself is the τ = 0 snapshot
    let mut c = cfg.solver.clone();
    c.record_times.clear();
    snaps.push(to_selfsim(&Solver::new(c)?.record(), &cfg.frame, &SelfSimOptions { xi_max, dxi: None })?);
    simulate(&cfg.solver, &times[1..], |f| {
        snaps.push(to_selfsim(f, &cfg.frame, &SelfSimOptions { xi_max, dxi: None })?);
        Ok(())
    })?;
    let opts = AutoScaleOptions {
        a0: DEFAULT_A0,
        delta: cfg.frame.delta,
        c_suff: cfg.barriers.c_suff,
        q0: cfg.barriers.q0,
        zeta0: cfg.barriers.zeta0,
        dtau: cfg.barriers.dtau,
        ..AutoScaleOptions::default()
    };
    let sup = certify_super(&snaps, &opts)?;
    let sub = certify_sub(&snaps, &opts)?;
    let corollary = kpp_core::barriers::corollary_bounds(&snaps, cfg.frame.delta);
    let pass = sup.sandwich.pass && sub.sandwich.pass && sup.conditions.pass && sub.conditions.pass;
    Ok(CertifyResult {
        snapshot_times: times,
        supersolution: sup,
        subsolution: sub,
        corollary,
        angular_gradient: angular_gradient_constants(&snaps),
        pass,
    })
}

/// Parameter grid for the integral-inequality check: `(a, b) ∈ {0.5, 1, 2}²`, `C ∈ {0.1, 1}`,
/// `q0 ∈ {0.5, 1, 2}`.
pub fn lemma31_grid(tau_max: f64) -> Result<Vec<Lemma31Report>> {
    let mut out = Vec::new();
    for a in [0.5, 1.0, 2.0] {
        for b in [0.5, 1.0, 2.0] {
            for c in [0.1, 1.0] {
                for q0 in [0.5, 1.0, 2.0] {
                    out.push(lemma31_check(a, b, c, q0, tau_max)?);
                }
            }
        }
    }
    Ok(out)
}

/// Largest `K_est(2q0)/K_est(q0)` over the grid.
pub fn lemma31_doubling_ratio(grid: &[Lemma31Report]) -> f64 {
    let mut worst: f64 = 0.0;
    for r in grid {
        if let Some(d) = grid
            .iter()
            .find(|s| s.a == r.a && s.b == r.b && s.c == r.c && s.q0 == 2.0 * r.q0)
        {
            worst = worst.max(d.k_est / r.k_est);
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub enum BarrierOutcome {
    Qzeta(QZetaTrajectory),
    Lemma31 { grid: Vec<Lemma31Report>, doubling_ratio: f64, pass: bool },
    Certify(Box<CertifyResult>),
}

pub fn barriers(cfg: &ExperimentConfig) -> Result<BarrierOutcome> {
    let b = &cfg.barriers;
    Ok(match b.mode {
        BarrierMode::Qzeta => {
            BarrierOutcome::Qzeta(solve_qzeta(b.c, cfg.frame.delta, b.q0, b.zeta0, b.tau_max, b.dtau)?)
        }
        BarrierMode::Lemma31 => {
            let grid = lemma31_grid(b.tau_max)?;
            let ratio = lemma31_doubling_ratio(&grid);
            BarrierOutcome::Lemma31 {
                pass: grid.iter().all(|r| r.pass) && ratio <= 8.0,
                doubling_ratio: ratio,
                grid,
            }
        }
        BarrierMode::Certify => BarrierOutcome::Certify(Box::new(certify(cfg)?)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpreadingResult {
    pub t: f64,
    pub inner: Vec<(f64, f64)>,
    pub outer: Vec<(f64, f64)>,
}

pub fn spreading(cfg: &ExperimentConfig) -> Result<SpreadingResult> {
    let sp = &cfg.spreading;
    let mut result = None;
    simulate(&cfg.solver, &[sp.time], |f| {
        let inner = sp
            .inner
            .iter()
            .map(|&c| spreading_check(f, c, SpreadSense::Inner).map(|v| (c, v)))
            .collect::<Result<Vec<_>>>()?;
        let outer = sp
            .outer
            .iter()
            .map(|&c| spreading_check(f, c, SpreadSense::Outer).map(|v| (c, v)))
            .collect::<Result<Vec<_>>>()?;
        result = Some(SpreadingResult { t: f.t, inner, outer });
        Ok(())
    })?;
    result.ok_or_else(|| Error::NoConvergence("spreading snapshot was not recorded".into()))
}
