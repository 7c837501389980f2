//! Level sets, front-law fits, amplitude profiles and convergence
//! diagnostics.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::frames::{moving_frame_shift, phi0, FrameParams, SelfSimSnapshot};
use crate::solver::SolutionField;
use crate::wave::WaveProfile;

pub const DEFAULT_LEVEL: f64 = 0.5;
const MIN_SAMPLES: usize = 20;
const MIN_SPAN: f64 = 4.0;
const MAX_CONDITION: f64 = 1e13;

/// Outermost `λ`-crossing per angle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCurve {
    pub t: f64,
    pub level: f64,
    pub theta: Vec<f64>,
    pub r_of_theta: Vec<f64>,
}

impl LevelCurve {
    pub fn mean(&self) -> f64 {
        self.r_of_theta.iter().sum::<f64>() / self.r_of_theta.len() as f64
    }
}

/// Largest `r` with `u >= λ` per angle, refined linearly between the
/// bracketing nodes.
pub fn level_position(s: &SolutionField, level: f64) -> Result<LevelCurve> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid("level", "must lie in (0, 1)"));
    }
    let mut r_of_theta = Vec::with_capacity(s.n_theta);
    for j in 0..s.n_theta {
        let row = s.row(j);
        let i = row.iter().rposition(|&u| u >= level).ok_or_else(|| Error::NoCrossing {
            level,
            detail: format!("row {j} stays below the level at t = {}", s.t),
        })?;
        if i + 1 == row.len() {
            return Err(Error::NoCrossing {
                level,
                detail: format!("row {j} is above the level at the leading edge (t = {})", s.t),
            });
        }
        let (a, b) = (row[i], row[i + 1]);
        let f = (a - level) / (a - b);
        r_of_theta.push(s.r(i) + f * s.dr);
    }
    Ok(LevelCurve {
        t: s.t,
        level,
        theta: (0..s.n_theta).map(|j| s.theta(j)).collect(),
        r_of_theta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontModel {
    /// `r = ct − k ln t + s`.
    CtKlntS,
    /// `r = ct − k ln t + s + b/√t`.
    CtKlntSBsqrt,
}

impl FrontModel {
    fn n_params(self) -> usize {
        match self {
            FrontModel::CtKlntS => 3,
            FrontModel::CtKlntSBsqrt => 4,
        }
    }

    fn regressors(self, t: f64) -> [f64; 4] {
        [t, -t.ln(), 1.0, if self == FrontModel::CtKlntSBsqrt { t.sqrt().recip() } else { 0.0 }]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontFit {
    pub model: FrontModel,
    pub c_fit: f64,
    pub k_fit: f64,
    /// Angle-pooled intercept.
    pub s_mean: f64,
    /// Per-angle intercepts with `(c, k, b)` held at the pooled values.
    pub s_fit: Vec<f64>,
    pub b_fit: f64,
    pub window: (f64, f64),
    pub n_samples: usize,
    /// RMS over all `(t, Θ)` samples.
    pub residual: f64,
    /// Covariance of `(c, k)` from the pooled fit: `[[cc, ck], [ck, kk]]`.
    pub covariance: [[f64; 2]; 2],
    pub condition: f64,
}

impl FrontFit {
    pub fn predict(&self, t: f64, s: f64) -> f64 {
        self.c_fit * t - self.k_fit * t.ln() + s + self.b_fit / t.sqrt()
    }

    pub fn correlation_ck(&self) -> f64 {
        self.covariance[0][1] / (self.covariance[0][0] * self.covariance[1][1]).sqrt()
    }
}

/// Least squares for one series. Returns parameters, covariance, RMS and
/// the condition number of the column-scaled design matrix.
pub fn lsq_front(t: &[f64], r: &[f64], model: FrontModel) -> Result<(Vec<f64>, DMatrix<f64>, f64, f64)> {
    let n = t.len();
    let p = model.n_params();
    if n != r.len() || n < MIN_SAMPLES {
        return Err(Error::IllConditioned(format!("need at least {MIN_SAMPLES} samples, have {n}")));
    }
    let (lo, hi) = t.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    if !(lo > 0.0 && hi / lo >= MIN_SPAN) {
        return Err(Error::IllConditioned(format!(
            "time window [{lo}, {hi}] spans less than a factor {MIN_SPAN}"
        )));
    }
    let mut a = DMatrix::<f64>::zeros(n, p);
    for (i, &ti) in t.iter().enumerate() {
        let reg = model.regressors(ti);
        for j in 0..p {
            a[(i, j)] = reg[j];
        }
    }
    let scale: Vec<f64> = (0..p).map(|j| a.column(j).norm()).collect();
    for j in 0..p {
        a.column_mut(j).scale_mut(1.0 / scale[j]);
    }
    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    let condition = smax / smin;
    if !(condition < MAX_CONDITION) {
        return Err(Error::IllConditioned(format!("condition number {condition:e}")));
    }
    let b = DVector::from_column_slice(r);
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::IllConditioned(e.to_string()))?;
    let resid = &b - &a * &x;
    let rss = resid.norm_squared();
    let rms = (rss / n as f64).sqrt();
    let sigma2 = if n > p { rss / (n - p) as f64 } else { 0.0 };
    let v_t = svd.v_t.as_ref().unwrap();
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut s = 0.0;
            for k in 0..p {
                s += v_t[(k, i)] * v_t[(k, j)] / (sv[k] * sv[k]);
            }
            cov[(i, j)] = sigma2 * s / (scale[i] * scale[j]);
        }
    }
    let params: Vec<f64> = (0..p).map(|j| x[j] / scale[j]).collect();
    Ok((params, cov, rms, condition))
}

/// Two-stage fit: `(c, k, s, b)` from the angle-mean series, then one
/// intercept per angle.
pub fn fit_front_law(series: &[LevelCurve], model: FrontModel) -> Result<FrontFit> {
    if series.is_empty() {
        return Err(Error::IllConditioned("empty series".into()));
    }
    let n_theta = series[0].r_of_theta.len();
    if series.iter().any(|c| c.r_of_theta.len() != n_theta) {
        return Err(invalid("series", "angular resolution changes along the series"));
    }
    let t: Vec<f64> = series.iter().map(|c| c.t).collect();
    let rbar: Vec<f64> = series.iter().map(LevelCurve::mean).collect();
    let (x, cov, _, condition) = lsq_front(&t, &rbar, model)?;
    let (c, k, s) = (x[0], x[1], x[2]);
    let b = if model == FrontModel::CtKlntSBsqrt { x[3] } else { 0.0 };
    let base = |ti: f64| c * ti - k * ti.ln() + b / ti.sqrt();
    let s_fit: Vec<f64> = (0..n_theta)
        .map(|j| series.iter().map(|cv| cv.r_of_theta[j] - base(cv.t)).sum::<f64>() / series.len() as f64)
        .collect();
    let mut ss = 0.0;
    for cv in series {
        for j in 0..n_theta {
            ss += (cv.r_of_theta[j] - base(cv.t) - s_fit[j]).powi(2);
        }
    }
    let (lo, hi) = t.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(FrontFit {
        model,
        c_fit: c,
        k_fit: k,
        s_mean: s,
        s_fit,
        b_fit: b,
        window: (lo, hi),
        n_samples: series.len(),
        residual: (ss / (series.len() * n_theta) as f64).sqrt(),
        covariance: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        condition,
    })
}

/// `max − min` over the series of `r̄(t) − (c*t − k ln t)`.
pub fn trapping_spread(series: &[LevelCurve], c_star: f64, k: f64) -> f64 {
    let d: Vec<f64> = series.iter().map(|c| c.mean() - (c_star * c.t - k * c.t.ln())).collect();
    d.iter().copied().fold(f64::NEG_INFINITY, f64::max) - d.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMethod {
    Slope,
    Projection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaProfile {
    pub tau: f64,
    pub method: AlphaMethod,
    pub theta: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `max_Θ |w(τ, 0, Θ)| / (α·dξ)`; large values mean the snapshot is
    /// not yet asymptotic near the origin.
    pub origin_ratio: f64,
    pub pre_asymptotic: bool,
}

/// Weight exponent of the projection inner product: `L` is symmetric in
/// `L²(e^{ξ²/4} dξ)` on the half-line with a Dirichlet condition at 0.
pub const PROJECTION_WEIGHT: f64 = 0.25;

pub fn estimate_alpha(w: &SelfSimSnapshot, method: AlphaMethod) -> Result<AlphaProfile> {
    let j0 = w.zero_index().ok_or(Error::Coverage {
        what: "xi (node at 0)",
        lo: 0.0,
        hi: 0.0,
        have_lo: w.xi(0),
        have_hi: w.xi(w.n_xi - 1),
    })?;
    if w.n_xi - j0 < 5 {
        return Err(invalid("w", "needs at least five nodes with xi >= 0"));
    }
    let h = w.dxi;
    let mut alpha = Vec::with_capacity(w.n_theta);
    let mut origin_ratio: f64 = 0.0;
    for th in 0..w.n_theta {
        let row = &w.row(th)[j0..];
        let a = match method {
            AlphaMethod::Slope => (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * h),
            AlphaMethod::Projection => {
                let mut num = 0.0;
                let mut den = 0.0;
                let last = row.len() - 1;
                for (k, &v) in row.iter().enumerate() {
                    let xi = k as f64 * h;
                    let wt = if k == 0 || k == last { 0.5 } else { 1.0 };
                    let p = phi0(xi);
                    let g = (PROJECTION_WEIGHT * xi * xi).exp();
                    num += wt * v * p * g;
                    den += wt * p * p * g;
                }
                num / den
            }
        };
        origin_ratio = origin_ratio.max(row[0].abs() / (a.abs() * h));
        alpha.push(a);
    }
    if let Some((i, &v)) = alpha.iter().enumerate().find(|(_, &a)| !(a > 0.0)) {
        return Err(Error::NonPositiveAlpha { index: i, value: v });
    }
    Ok(AlphaProfile {
        tau: w.tau,
        method,
        theta: (0..w.n_theta).map(|j| w.theta(j)).collect(),
        alpha,
        origin_ratio,
        pre_asymptotic: origin_ratio > 1.0,
    })
}

/// `s∞(Θ) = −ln α(Θ) + s_norm`. With a wave `U ~ A(x + K)e^{−x}` anchored at
/// `U(0) = 1/2`, `s_norm = ln A` converts the unit-amplitude convention to
/// the anchored one.
pub fn s_infinity(a: &AlphaProfile, s_norm: f64) -> Result<Vec<f64>> {
    a.alpha
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > 0.0 {
                Ok(-v.ln() + s_norm)
            } else {
                Err(Error::NonPositiveAlpha { index: i, value: v })
            }
        })
        .collect()
}

/// `sup |u(t, r, Θ) − U(r − R(t) + s∞(Θ))|` over solver nodes in the shell.
pub fn wave_convergence_error(
    s: &SolutionField,
    wave: &WaveProfile,
    sinf: &[f64],
    p: &FrameParams,
    shell: (f64, f64),
) -> Result<f64> {
    if sinf.len() != s.n_theta {
        return Err(invalid("sinf", "one value per angle required"));
    }
    if shell.0 < s.r_min() || shell.1 > s.r_max() || shell.0 >= shell.1 {
        return Err(Error::Coverage {
            what: "shell",
            lo: shell.0,
            hi: shell.1,
            have_lo: s.r_min(),
            have_hi: s.r_max(),
        });
    }
    let big_r = moving_frame_shift(s.t, p)?;
    let mut worst: f64 = 0.0;
    for j in 0..s.n_theta {
        let row = s.row(j);
        for (i, &u) in row.iter().enumerate() {
            let r = s.r(i);
            if r < shell.0 || r > shell.1 {
                continue;
            }
            worst = worst.max((u - wave.query(r - big_r + sinf[j])).abs());
        }
    }
    Ok(worst)
}

/// `sup e^{ξ²/16} |w − α(Θ)φ₀(ξ)|` over the snapshot grid.
pub fn selfsim_error(w: &SelfSimSnapshot, a: &AlphaProfile) -> Result<f64> {
    if a.alpha.len() != w.n_theta {
        return Err(invalid("alpha", "angular grids differ"));
    }
    let mut worst: f64 = 0.0;
    for th in 0..w.n_theta {
        let row = w.row(th);
        for (j, &v) in row.iter().enumerate() {
            let xi = w.xi(j);
            let e = (w.weight_exponent * xi * xi).exp() * (v - a.alpha[th] * phi0(xi)).abs();
            worst = worst.max(e);
        }
    }
    Ok(worst)
}

/// Largest `|Δα|/ΔΘ` between neighbouring angles, wrapping around.
pub fn lipschitz_estimate(a: &AlphaProfile) -> Result<f64> {
    let n = a.alpha.len();
    if n < 8 {
        return Err(invalid("alpha", "needs at least 8 angular samples"));
    }
    let dth = std::f64::consts::TAU / n as f64;
    Ok((0..n)
        .map(|j| (a.alpha[(j + 1) % n] - a.alpha[j]).abs() / dth)
        .fold(0.0, f64::max))
}

pub fn oscillation(c: &LevelCurve) -> f64 {
    let hi = c.r_of_theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = c.r_of_theta.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpreadSense {
    Inner,
    Outer,
}

/// Inner: `min u` over `r <= ct`; the region behind a detached trailing edge
/// takes the trailing boundary value. Outer: `sup u` over `r >= ct`.
pub fn spreading_check(s: &SolutionField, c: f64, sense: SpreadSense) -> Result<f64> {
    let rc = c * s.t;
    let uncovered = || Error::Coverage {
        what: "spreading radius",
        lo: rc,
        hi: rc,
        have_lo: s.r_min(),
        have_hi: s.r_max(),
    };
    match sense {
        SpreadSense::Inner => {
            if rc > s.r_max() {
                return Err(uncovered());
            }
            let mut m = f64::INFINITY;
            for j in 0..s.n_theta {
                let row = s.row(j);
                if let Some(g) = &s.trailing_ghost {
                    m = m.min(g[j]);
                }
                for (i, &u) in row.iter().enumerate() {
                    if s.r(i) <= rc {
                        m = m.min(u);
                    }
                }
            }
            Ok(m)
        }
        SpreadSense::Outer => {
            if rc < s.r_min() && !s.contains_origin() {
                return Err(uncovered());
            }
            if rc > s.r_max() {
                return Ok(s.leading_ghost);
            }
            let mut m: f64 = 0.0;
            for j in 0..s.n_theta {
                for (i, &u) in s.row(j).iter().enumerate() {
                    if s.r(i) >= rc {
                        m = m.max(u);
                    }
                }
            }
            Ok(m)
        }
    }
}
