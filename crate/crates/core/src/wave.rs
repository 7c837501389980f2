//! One-dimensional travelling waves `U'' + cU' + f(U) = 0`, `U(-∞) = 1`,
//! `U(+∞) = 0`, normalised by `U(0) = 1/2`.
//!
//! The profile is computed by shooting along the one-dimensional unstable
//! manifold of the saddle `(U, U') = (1, 0)`: the only free parameter is the
//! position along the manifold, which is fixed by bisection so that the
//! trajectory passes through `1/2` at `x = 0`. The ODE is integrated with RK4
//! on sub-steps of the output grid, so the grid values carry the continuous
//! profile rather than a second-order discrete approximation of it. This
//! matters at the minimal speed, where the resonant tail `(x + K)e^{-x}` is
//! sensitive to any perturbation of the double root.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::Nonlinearity;

/// Default half-length of the computational interval.
pub const DEFAULT_HALF_LENGTH: f64 = 40.0;
/// Boundary tolerance: `U(x_min) > 1 - TOL_BC`, `U(x_max) < TOL_BC`.
pub const TOL_BC: f64 = 1e-6;
/// Width of the default tail-fitting window.
pub const TAIL_WINDOW_WIDTH: f64 = 4.0;
/// The tail fit is only meaningful where `U` is below this level; above it
/// the quadratic correction `~U(x)` to `e^x U` is resolved by the fit.
pub const TAIL_LEVEL: f64 = 1e-3;
/// Level at which the default tail window starts.
pub const DEFAULT_TAIL_START_LEVEL: f64 = 1e-5;

const RK_SUBSTEPS: usize = 4;
const SPEED_EPS: f64 = 1e-12;

/// Least-squares description of the minimal-speed tail.
///
/// On the window, `e^x U(x) ≈ A (x + K_affine)`. In the unit-amplitude
/// convention `U(y) = (y + K_tail) e^{-y}` the same wave is `U(y + ln A)`,
/// so `K_tail = K_affine + ln A` and the translation between the two
/// conventions is `s_norm = ln A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailFit {
    pub window: (f64, f64),
    pub amplitude: f64,
    pub k_affine: f64,
    pub k_tail: f64,
    /// Largest relative deviation of `e^x U` from the fitted affine function.
    pub rel_residual: f64,
    /// Estimated decay exponent of `U(x) - A(x + K)e^{-x}`; `1 + δ₀`.
    pub remainder_rate: f64,
}

impl TailFit {
    /// Shift from the `U(0) = 1/2` anchor to the unit-amplitude convention.
    pub fn s_norm(&self) -> f64 {
        self.amplitude.ln()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WaveProfile {
    pub c: f64,
    pub c_star: f64,
    pub x_min: f64,
    pub dx: f64,
    pub values: Vec<f64>,
    /// Fitted minimal-speed tail; `None` for `c > c*`.
    pub tail: Option<TailFit>,
    /// Decay rate of the leading tail, `e^{-m x}`.
    pub right_rate: f64,
    /// Amplitude `B` of the pure exponential right extension (c > c*).
    pub right_amp: f64,
    /// `1 - U ~ left_amp e^{left_rate (x - x_min)}` behind the grid.
    pub left_rate: f64,
    pub left_amp: f64,
    /// Max of the ODE residual evaluated with fourth-order differences.
    pub residual: f64,
    #[serde(skip)]
    slopes: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct WaveOptions {
    pub half_length: f64,
    /// Bracket for `ln(1 - U(x_min))` used by the bisection.
    pub ln_eps_bracket: (f64, f64),
}

impl Default for WaveOptions {
    fn default() -> Self {
        WaveOptions {
            half_length: DEFAULT_HALF_LENGTH,
            ln_eps_bracket: (-600.0, (0.5f64).ln()),
        }
    }
}

pub fn solve_profile(nl: &Nonlinearity, c: f64, dx: f64, tol: f64) -> Result<WaveProfile> {
    solve_profile_with(nl, c, dx, tol, &WaveOptions::default())
}

pub fn solve_profile_with(
    nl: &Nonlinearity,
    c: f64,
    dx: f64,
    tol: f64,
    opts: &WaveOptions,
) -> Result<WaveProfile> {
    if !c.is_finite() {
        return Err(Error::NonFinite("c"));
    }
    if !(dx.is_finite() && dx > 0.0 && dx <= 0.25) {
        return Err(invalid("dx", "must lie in (0, 0.25]"));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(invalid("tol", "must be positive"));
    }
    let c_star = nl.c_star();
    if c < c_star - SPEED_EPS {
        return Err(Error::BelowMinimalSpeed { c, c_star });
    }
    let mut half_length = opts.half_length;
    loop {
        match solve_on(nl, c, c_star, dx, tol, half_length, opts.ln_eps_bracket) {
            Err(Error::InvalidParameter { name: "half_length", .. }) if half_length < 400.0 => {
                half_length *= 1.5;
            }
            other => return other,
        }
    }
}

fn solve_on(
    nl: &Nonlinearity,
    c: f64,
    c_star: f64,
    dx: f64,
    tol: f64,
    half_length: f64,
    bracket: (f64, f64),
) -> Result<WaveProfile> {
    let half_cells = (half_length / dx).round() as usize;
    if half_cells < 20 {
        return Err(invalid("half_length", "domain too short for the grid"));
    }
    let n = 2 * half_cells + 1;
    let x_min = -(half_cells as f64) * dx;

    let beta = -nl.fprime1();
    let left_rate = 0.5 * (-c + (c * c + 4.0 * beta).sqrt());
    let shooter = Shooter {
        nl,
        c,
        dx,
        left_rate,
    };

    // U(0) decreases as the start point moves along the manifold
    let (mut lo, mut hi) = bracket;
    let at_zero = |ln_eps: f64| shooter.march(ln_eps, half_cells + 1).map(|v| v[half_cells]);
    let u_lo = at_zero(lo)?;
    let u_hi = at_zero(hi)?;
    if !(u_lo > 0.5 && u_hi < 0.5) {
        return Err(Error::NoConvergence(format!(
            "shooting bracket does not straddle U(0) = 1/2 (got {u_lo}, {u_hi})"
        )));
    }
    let mut iters = 0;
    while hi - lo > 1e-15 * lo.abs().max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if at_zero(mid)? > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
        if iters > 400 {
            return Err(Error::NoConvergence("bisection exceeded 400 steps".into()));
        }
    }
    let ln_eps = if (at_zero(lo)? - 0.5).abs() <= (at_zero(hi)? - 0.5).abs() {
        lo
    } else {
        hi
    };
    let values = shooter.march(ln_eps, n)?;
    if (values[half_cells] - 0.5).abs() > tol.max(1e-12) {
        return Err(Error::NoConvergence(format!(
            "normalisation missed: U(0) = {}",
            values[half_cells]
        )));
    }
    for w in values.windows(2) {
        if w[1] > w[0] || w[1] <= 0.0 {
            return Err(Error::BelowMinimalSpeed { c, c_star });
        }
    }
    if values[0] <= 1.0 - TOL_BC || values[n - 1] >= TOL_BC {
        return Err(invalid(
            "half_length",
            "domain too short: boundary values not within TOL_BC of 1 and 0",
        ));
    }

    let disc = (c * c - 4.0 * nl.fprime0()).max(0.0);
    let right_rate = 0.5 * (c - disc.sqrt());
    let x_max = x_min + (n - 1) as f64 * dx;
    let mut profile = WaveProfile {
        c,
        c_star,
        x_min,
        dx,
        left_rate,
        left_amp: ln_eps.exp(),
        right_rate,
        right_amp: values[n - 1] * (right_rate * x_max).exp(),
        slopes: pchip_slopes(&values, dx),
        values,
        tail: None,
        residual: 0.0,
    };
    profile.residual = ode_residual(nl, &profile);
    if !(profile.residual < 1e3 * tol.max(1e-12) + 1e-6) {
        return Err(Error::NoConvergence(format!(
            "ODE residual {} too large",
            profile.residual
        )));
    }
    if profile.is_minimal_speed() {
        let a = (profile.inverse(DEFAULT_TAIL_START_LEVEL)? / dx).ceil() * dx;
        profile.tail = Some(fit_tail_constant(&profile, (a, a + TAIL_WINDOW_WIDTH))?);
    }
    Ok(profile)
}

struct Shooter<'a> {
    nl: &'a Nonlinearity,
    c: f64,
    dx: f64,
    left_rate: f64,
}

impl Shooter<'_> {
    /// Integrates from `x_min` with `1 - U = e^{ln_eps}` on the linear
    /// unstable manifold and returns `n` grid values.
    fn march(&self, ln_eps: f64, n: usize) -> Result<Vec<f64>> {
        let h = self.dx / RK_SUBSTEPS as f64;
        let c = self.c;
        let nl = self.nl;
        let mut out = Vec::with_capacity(n);
        // while V = 1 - U < 1/2 integrate V to keep its relative precision
        let mut near_one = true;
        let eps = ln_eps.exp();
        let (mut y, mut p) = (eps, self.left_rate * eps);
        out.push(1.0 - y);
        while out.len() < n {
            for _ in 0..RK_SUBSTEPS {
                let rhs = |y: f64, p: f64| -> (f64, f64) {
                    if near_one {
                        (p, -c * p + nl.f_near_one(y))
                    } else {
                        (p, -c * p - nl.f(y))
                    }
                };
                let (k1y, k1p) = rhs(y, p);
                let (k2y, k2p) = rhs(y + 0.5 * h * k1y, p + 0.5 * h * k1p);
                let (k3y, k3p) = rhs(y + 0.5 * h * k2y, p + 0.5 * h * k2p);
                let (k4y, k4p) = rhs(y + h * k3y, p + h * k3p);
                y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
                p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
                if near_one && y > 0.5 {
                    near_one = false;
                    y = 1.0 - y;
                    p = -p;
                }
            }
            if !y.is_finite() || !p.is_finite() {
                return Err(Error::NoConvergence("shooting trajectory blew up".into()));
            }
            out.push(if near_one { 1.0 - y } else { y });
        }
        Ok(out)
    }
}

/// Fourth-order residual `max |U'' + cU' + f(U)|` over interior nodes.
fn ode_residual(nl: &Nonlinearity, w: &WaveProfile) -> f64 {
    let u = &w.values;
    let h = w.dx;
    let mut worst: f64 = 0.0;
    for i in 2..u.len() - 2 {
        let d2 = (-u[i + 2] + 16.0 * u[i + 1] - 30.0 * u[i] + 16.0 * u[i - 1] - u[i - 2])
            / (12.0 * h * h);
        let d1 = (-u[i + 2] + 8.0 * u[i + 1] - 8.0 * u[i - 1] + u[i - 2]) / (12.0 * h);
        worst = worst.max((d2 + w.c * d1 + nl.f(u[i])).abs());
    }
    worst
}

/// Fritsch-Carlson monotone slopes for piecewise cubic Hermite interpolation.
fn pchip_slopes(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    let delta: Vec<f64> = u.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut m = vec![0.0; n];
    m[0] = delta[0];
    m[n - 1] = delta[n - 2];
    for i in 1..n - 1 {
        let (a, b) = (delta[i - 1], delta[i]);
        m[i] = if a * b <= 0.0 { 0.0 } else { 2.0 * a * b / (a + b) };
    }
    m
}

impl WaveProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.values.len() - 1)
    }

    pub fn is_minimal_speed(&self) -> bool {
        (self.c - self.c_star).abs() <= SPEED_EPS
    }

    /// Shift `s_norm` between the `U(0) = 1/2` anchor and the unit-amplitude
    /// tail convention (zero when no tail fit exists).
    pub fn s_norm(&self) -> f64 {
        self.tail.map_or(0.0, |t| t.s_norm())
    }

    /// Value of the profile at any `x`.
    pub fn query(&self, x: f64) -> f64 {
        let n = self.values.len();
        let x_max = self.x_max();
        if x.is_nan() {
            return f64::NAN;
        }
        if x < self.x_min {
            return 1.0 - self.left_amp * (self.left_rate * (x - self.x_min)).exp();
        }
        if x > x_max {
            return match &self.tail {
                Some(t) => t.amplitude * (x + t.k_affine) * (-self.right_rate * x).exp(),
                None => self.right_amp * (-self.right_rate * x).exp(),
            };
        }
        let s = (x - self.x_min) / self.dx;
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        if t == 0.0 {
            return self.values[i];
        }
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.dx, self.slopes[i + 1] * self.dx);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }

    /// The unique `x` with `U(x) = level`.
    pub fn inverse(&self, level: f64) -> Result<f64> {
        if !(level > TOL_BC && level < 1.0 - TOL_BC) {
            return Err(Error::OutOfRange {
                what: "wave level",
                value: level,
                lo: TOL_BC,
                hi: 1.0 - TOL_BC,
            });
        }
        // bracket by nodes, then bisect on the interpolant
        let idx = self.values.partition_point(|&u| u > level);
        let (mut lo, mut hi) = if idx == 0 {
            let mut lo = self.x_min - 1.0;
            while self.query(lo) <= level {
                lo -= 1.0;
            }
            (lo, self.x_min)
        } else if idx == self.values.len() {
            let mut hi = self.x_max() + 1.0;
            while self.query(hi) >= level {
                hi += 1.0;
            }
            (self.x_max(), hi)
        } else {
            (self.x(idx - 1), self.x(idx))
        };
        let tol = 1e-10 * self.dx;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if self.query(mid) > level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

pub fn profile_query(w: &WaveProfile, x: f64) -> f64 {
    w.query(x)
}

pub fn profile_inverse(w: &WaveProfile, level: f64) -> Result<f64> {
    w.inverse(level)
}

/// Affine least-squares fit `e^{mx} U(x) ≈ A x + B` on the nodes of `window`,
/// with `m` the leading tail rate. Returns `(A, B, max relative residual)`.
pub fn affine_tail_fit(w: &WaveProfile, window: (f64, f64)) -> Result<(f64, f64, f64)> {
    let (a, b) = window;
    let i0 = ((a - w.x_min) / w.dx).ceil().max(0.0) as usize;
    let i1 = (((b - w.x_min) / w.dx).floor() as usize).min(w.values.len() - 1);
    if i1 < i0 || i1 - i0 + 1 < 10 {
        return Err(invalid("window", "fewer than 10 nodes in the tail window"));
    }
    let pts: Vec<(f64, f64)> = (i0..=i1)
        .map(|i| {
            let x = w.x(i);
            (x, w.values[i] * (w.right_rate * x).exp())
        })
        .collect();
    if pts.iter().any(|&(x, y)| !(y.is_finite() && y > 0.0) || w.query(x) < 1e-280) {
        return Err(invalid("window", "tail window contains underflowed values"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rel = pts
        .iter()
        .map(|&(x, y)| ((y - slope * x - intercept) / y).abs())
        .fold(0.0, f64::max);
    Ok((slope, intercept, rel))
}

/// Fits the minimal-speed tail `A (x + K) e^{-m x}` on `window`, where
/// `m = c*/2` (`m = 1` for the quadratic nonlinearity).
pub fn fit_tail_constant(w: &WaveProfile, window: (f64, f64)) -> Result<TailFit> {
    if !w.is_minimal_speed() {
        return Err(Error::NotMinimalSpeed {
            c: w.c,
            c_star: w.c_star,
        });
    }
    if !(window.0 < window.1) {
        return Err(invalid("window", "empty interval"));
    }
    if w.query(window.0) >= TAIL_LEVEL {
        return Err(invalid("window", "window does not lie in the resolved tail"));
    }
    let (amp, intercept, rel_residual) = affine_tail_fit(w, window)?;
    if !(amp > 0.0) {
        return Err(Error::NoConvergence("non-positive tail amplitude".into()));
    }
    let k_affine = intercept / amp;

    // decay of the remainder from the drift of the local intercept across
    // shifted windows: K(x) - K(∞) ~ e^{-δ₀ x}
    let width = window.1 - window.0;
    let step = 0.5 * width;
    let shifted = |k: f64| affine_tail_fit(w, (window.0 + k * step, window.1 + k * step));
    let remainder_rate = match (shifted(1.0), shifted(2.0)) {
        (Ok((a1, b1, _)), Ok((a2, b2, _))) => {
            let d1 = k_affine - b1 / a1;
            let d2 = b1 / a1 - b2 / a2;
            if d1 * d2 > 0.0 && d1.abs() > d2.abs() {
                1.0 + (d1 / d2).ln() / step
            } else {
                f64::NAN
            }
        }
        _ => f64::NAN,
    };
    Ok(TailFit {
        window,
        amplitude: amp,
        k_affine,
        k_tail: k_affine + amp.ln(),
        rel_residual,
        remainder_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fisher() -> Nonlinearity {
        Nonlinearity::QuadraticKpp
    }

    #[test]
    fn minimal_speed_profile_is_normalised_and_monotone() {
        let w = solve_profile(&fisher(), 2.0, 0.02, 1e-10).unwrap();
        assert_eq!(w.query(0.0), w.values[(w.len() - 1) / 2]);
        assert!((w.query(0.0) - 0.5).abs() < 1e-12);
        assert!(w.values.windows(2).all(|p| p[1] < p[0]));
        assert!(w.values[0] > 1.0 - TOL_BC && *w.values.last().unwrap() < TOL_BC);
        assert!(w.residual < 1e-8, "residual {}", w.residual);
    }

    #[test]
    fn rejects_speed_below_minimal() {
        let err = solve_profile(&fisher(), 1.9, 0.02, 1e-10).unwrap_err();
        assert!(matches!(err, Error::BelowMinimalSpeed { .. }));
    }

    #[test]
    fn five_over_root_six_is_supercritical() {
        // 5/sqrt(6) = 2.0412 > c* = 2: the closed-form Ablowitz-Zeppetella wave
        let c = 5.0 / 6f64.sqrt();
        let w = solve_profile(&fisher(), c, 0.02, 1e-10).unwrap();
        let k = 2f64.sqrt() - 1.0;
        let exact = |x: f64| (1.0 + k * (x / 6f64.sqrt()).exp()).powi(-2);
        for i in (0..w.len()).step_by(50) {
            let x = w.x(i);
            assert!((w.values[i] - exact(x)).abs() < 1e-9, "x = {x}");
        }
    }

    #[test]
    fn supercritical_tail_rate() {
        let w = solve_profile(&fisher(), 3.0, 0.02, 1e-10).unwrap();
        let m = (3.0 - 5f64.sqrt()) / 2.0;
        assert!((w.right_rate - m).abs() < 1e-15);
        for x in [15.0, 18.0, 21.0, 24.0] {
            let rate = w.query(x).ln() - w.query(x + 1.0).ln();
            assert!((rate - m).abs() < 2e-3, "x = {x}: {rate}");
        }
        assert!(w.tail.is_none());
        assert!(matches!(
            fit_tail_constant(&w, (30.0, 34.0)),
            Err(Error::NotMinimalSpeed { .. })
        ));
    }

    #[test]
    fn query_and_inverse_round_trip() {
        let w = solve_profile(&fisher(), 2.0, 0.02, 1e-10).unwrap();
        assert!(w.inverse(0.5).unwrap().abs() < 1e-10);
        let x3 = w.inverse(w.query(3.0)).unwrap();
        assert!((x3 - 3.0).abs() < 1e-8);
        let x = w.inverse(0.1).unwrap();
        assert!((w.query(x) - 0.1).abs() < 1e-8);
        assert!(w.inverse(0.0).is_err());
        assert!(w.inverse(1.0 - 1e-9).is_err());
        for i in [0, 17, 2000, w.len() - 1] {
            assert_eq!(w.query(w.x(i)), w.values[i]);
        }
    }

    #[test]
    fn extension_beyond_grid() {
        let w = solve_profile(&fisher(), 2.0, 0.02, 1e-10).unwrap();
        let t = w.tail.unwrap();
        let x = w.x_max() + 5.0;
        let expected = t.amplitude * (x + t.k_affine) * (-x).exp();
        assert_eq!(w.query(x), expected);
        // unit-amplitude form of the same extension
        let y = x - t.s_norm();
        assert!(((y + t.k_tail) * (-y).exp() / expected - 1.0).abs() < 1e-12);
        let below = w.query(w.x_min - 2.0);
        assert!(below < 1.0 && below > w.values[0]);
    }

    #[test]
    fn tail_window_errors() {
        let w = solve_profile(&fisher(), 2.0, 0.02, 1e-10).unwrap();
        assert!(fit_tail_constant(&w, (8.0, 8.1)).is_err());
        assert!(fit_tail_constant(&w, (-2.0, 2.0)).is_err());
        // U(8) is about 6e-3 under the U(0) = 1/2 anchor
        assert!(fit_tail_constant(&w, (8.0, 12.0)).is_err());
        assert!(fit_tail_constant(&w, (12.0, 16.0)).is_ok());
    }

    #[test]
    fn general_nonlinearity_speed() {
        let nl = Nonlinearity::general(vec![2.0, 2.0]).unwrap();
        assert_eq!(nl.c_star(), 4.0);
        assert!(matches!(
            solve_profile(&nl, 3.0, 0.02, 1e-10),
            Err(Error::BelowMinimalSpeed { .. })
        ));
        let w = solve_profile(&nl, 4.0, 0.01, 1e-10).unwrap();
        assert!(w.values.windows(2).all(|p| p[1] <= p[0]));
        assert!(w.values.windows(2).all(|p| p[1] < p[0] || p[1] > 1.0 - 1e-12));
    }
}
