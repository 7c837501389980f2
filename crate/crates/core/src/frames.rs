//! Moving frame, exponential tilt and self-similar variables, together with
//! the operators and special functions of the self-similar analysis.
//!
//! With `R(t) = c*t − k ln t`, `r' = r − R(t)`, `u = e^{−r'} v`, `ξ = r'/√t`,
//! `τ = ln t` and `w = v/√t`, the tilted radial equation becomes
//! `w_τ + Lw = −(h + 3/2) w + h e^{−τ/2} w_ξ − e^{τ/2 − ξe^{τ/2}} w²` with
//! `Lw = −w_ξξ − (ξ/2) w_ξ − w` and
//! `h(τ, ξ) = (N − 1)e^τ / (ξ e^{τ/2} + c* e^τ − kτ) − k` (for `c* = 2`).

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::solver::SolutionField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameParams {
    pub n: u32,
    pub k: f64,
    pub c_star: f64,
    pub delta: f64,
    pub lambda_het: f64,
    /// Decay rate removed by the tilt; `c*/2` unless matched to a grid.
    pub tilt: f64,
}

pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_XI_MAX: f64 = 6.0;

impl FrameParams {
    /// Homogeneous frame, `k = (N + 2)/2` (`3/2` on the line).
    pub fn homogeneous(n: u32) -> Result<Self> {
        Self::new(n, (n as f64 + 2.0) / 2.0, 2.0, DEFAULT_DELTA, 0.0)
    }

    /// Frame for `ν(r) ~ λ/r^α`: `k = (N + 2 − λ)/2` when `α = 1`,
    /// unchanged `(N + 2)/2` when `α > 1`.
    pub fn heterogeneous(n: u32, lambda: f64, alpha: f64) -> Result<Self> {
        if !(alpha >= 1.0) {
            return Err(invalid("hetero.alpha", "frames are defined for alpha >= 1"));
        }
        let k = if alpha == 1.0 {
            (n as f64 + 2.0 - lambda) / 2.0
        } else {
            (n as f64 + 2.0) / 2.0
        };
        Self::new(n, k, 2.0, DEFAULT_DELTA, lambda)
    }

    pub fn new(n: u32, k: f64, c_star: f64, delta: f64, lambda_het: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("frame.N", "must be >= 1"));
        }
        if !k.is_finite() {
            return Err(Error::NonFinite("frame.k"));
        }
        if !(c_star.is_finite() && c_star > 0.0) {
            return Err(invalid("frame.c_star", "must be positive"));
        }
        if !(delta > 0.0 && delta < 0.25) {
            return Err(invalid("frame.delta", "must lie in (0, 1/4)"));
        }
        if !(lambda_het.is_finite() && lambda_het >= 0.0) {
            return Err(invalid("frame.lambda", "must be >= 0"));
        }
        Ok(FrameParams {
            n,
            k,
            c_star,
            delta,
            lambda_het,
            tilt: 0.5 * c_star,
        })
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.25) {
            return Err(invalid("frame.delta", "must lie in (0, 1/4)"));
        }
        self.delta = delta;
        Ok(self)
    }

    pub fn tilt_rate(&self) -> f64 {
        self.tilt
    }

    /// Frame moving at the minimal speed of the semi-discrete linearisation
    /// `u_t = D_dr u + f'(0)u`, with `D_dr` the three-point Laplacian. Its
    /// dispersion `σ(λ) = 2(cosh λdr − 1)/dr² + f'(0)` gives
    /// `c_dr = min σ(λ)/λ ≈ c* + c*³dr²/96`. A grid solution drifts against the
    /// exact frame by `(c_dr − c*)t`, which is secular in `τ`.
    pub fn matched_to_grid(mut self, dr: f64) -> Result<Self> {
        if !(dr > 0.0 && dr.is_finite()) {
            return Err(invalid("frame.dr", "must be positive"));
        }
        let (lambda, c) = discrete_minimal_speed(self.tilt * self.tilt, dr);
        self.c_star = c;
        self.tilt = lambda;
        Ok(self)
    }
}

/// `(λ_dr, c_dr)` for the three-point Laplacian with growth rate `a = f'(0)`.
pub fn discrete_minimal_speed(a: f64, dr: f64) -> (f64, f64) {
    let sigma = |l: f64| 2.0 * ((l * dr).cosh() - 1.0) / (dr * dr) + a;
    // stationarity of σ(λ)/λ: λσ'(λ) − σ(λ) = 0, increasing in λ
    let mut l = a.sqrt();
    for _ in 0..50 {
        let d1 = 2.0 * (l * dr).sinh() / dr;
        let d2 = 2.0 * (l * dr).cosh();
        let step = (l * d1 - sigma(l)) / (l * d2);
        l -= step;
        if step.abs() <= 1e-15 * l {
            break;
        }
    }
    (l, sigma(l) / l)
}

/// `R(t) = c* t − k ln t`.
pub fn moving_frame_shift(t: f64, p: &FrameParams) -> Result<f64> {
    if !(t >= 1.0) {
        return Err(Error::OutOfRange {
            what: "time",
            value: t,
            lo: 1.0,
            hi: f64::INFINITY,
        });
    }
    Ok(p.c_star * t - p.k * t.ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

/// `ξ_δ^± = ±e^{−(1/2 − δ)τ}`; the plus point is `r = t^δ`.
pub fn xi_delta(tau: f64, delta: f64, side: Side) -> f64 {
    side.sign() * (-(0.5 - delta) * tau).exp()
}

/// Drift coefficient `h(τ, ξ)` of the self-similar equation.
pub fn h_eval(tau: f64, xi: f64, p: &FrameParams) -> Result<f64> {
    let t = tau.exp();
    let denom = xi * (0.5 * tau).exp() + p.c_star * t - p.k * tau;
    if !(denom > 0.0) {
        return Err(Error::FrameValidity(format!(
            "r + R(t) = {denom} <= 0 at (tau, xi) = ({tau}, {xi})"
        )));
    }
    Ok((p.n as f64 - 1.0) * t / denom - p.k)
}

/// `(l₁, l₂)` of the hat-transformed equation on the given side.
pub fn l_coeffs(tau: f64, xi: f64, side: Side, p: &FrameParams) -> Result<(f64, f64)> {
    let xd = xi_delta(tau, p.delta, side);
    let h = h_eval(tau, xi + xd, p)?;
    let l1 = (0.5 - p.delta) * xd + h * (-0.5 * tau).exp();
    let l2 = -1.5 - h - 0.25 * xi * l1;
    Ok((l1, l2))
}

/// `φ₀(ξ) = ξ e^{−ξ²/4}`, the kernel of `L` on the half-line.
pub fn phi0(xi: f64) -> f64 {
    xi * (-0.25 * xi * xi).exp()
}

/// `ϕ₀(ξ) = ξ e^{−ξ²/8}`, the kernel of `M`.
pub fn varphi0(xi: f64) -> f64 {
    xi * (-0.125 * xi * xi).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OperatorKind {
    L,
    M,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorOutput {
    pub values: Vec<f64>,
    /// End values use one-sided second-order stencils.
    pub one_sided_ends: bool,
}

/// Second-order discretisation of `L` or `M` on the uniform grid
/// `ξ_j = xi0 + j·dxi`.
pub fn apply_operator(kind: OperatorKind, w: &[f64], xi0: f64, dxi: f64) -> Result<OperatorOutput> {
    let n = w.len();
    if n < 5 {
        return Err(invalid("w", "operator needs at least 5 grid nodes"));
    }
    if !(dxi > 0.0) {
        return Err(invalid("dxi", "must be positive"));
    }
    let h2 = dxi * dxi;
    let d1 = |j: usize| -> f64 {
        if j == 0 {
            (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * dxi)
        } else if j == n - 1 {
            (3.0 * w[n - 1] - 4.0 * w[n - 2] + w[n - 3]) / (2.0 * dxi)
        } else {
            (w[j + 1] - w[j - 1]) / (2.0 * dxi)
        }
    };
    let d2 = |j: usize| -> f64 {
        if j == 0 {
            (2.0 * w[0] - 5.0 * w[1] + 4.0 * w[2] - w[3]) / h2
        } else if j == n - 1 {
            (2.0 * w[n - 1] - 5.0 * w[n - 2] + 4.0 * w[n - 3] - w[n - 4]) / h2
        } else {
            (w[j + 1] - 2.0 * w[j] + w[j - 1]) / h2
        }
    };
    let values = (0..n)
        .map(|j| {
            let xi = xi0 + j as f64 * dxi;
            match kind {
                OperatorKind::L => -d2(j) - 0.5 * xi * d1(j) - w[j],
                OperatorKind::M => -d2(j) + (xi * xi / 16.0 - 0.75) * w[j],
            }
        })
        .collect();
    Ok(OperatorOutput {
        values,
        one_sided_ends: true,
    })
}

/// Principal Dirichlet data of `−∂ξξ` on `(−a0, a0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenData {
    pub a0: f64,
    pub lambda1: f64,
}

pub const DEFAULT_A0: f64 = PI / 20.0;

pub fn eigen_data(a0: f64) -> Result<EigenData> {
    if !(a0.is_finite() && a0 > 0.0) {
        return Err(invalid("a0", "must be positive"));
    }
    Ok(EigenData {
        a0,
        lambda1: PI * PI / (4.0 * a0 * a0),
    })
}

impl EigenData {
    /// `φ₁(ξ) = cos(πξ/2a0)` on `[−a0, a0]`, zero outside.
    pub fn phi1(&self, xi: f64) -> f64 {
        if xi.abs() >= self.a0 {
            0.0
        } else {
            (PI * xi / (2.0 * self.a0)).cos()
        }
    }

    pub fn phi1_prime(&self, xi: f64) -> f64 {
        if xi.abs() >= self.a0 {
            0.0
        } else {
            let s = PI / (2.0 * self.a0);
            -s * (s * xi).sin()
        }
    }

    /// The barrier construction needs `λ₁(a0) >= 100`.
    pub fn require_admissible(&self) -> Result<()> {
        if self.lambda1 < 100.0 * (1.0 - 1e-12) {
            return Err(Error::OutOfRange {
                what: "a0 (lambda1 >= 100 requires a0 <= pi/20)",
                value: self.a0,
                lo: 0.0,
                hi: DEFAULT_A0,
            });
        }
        Ok(())
    }
}

/// Tilted field `v(t, r', Θ) = e^{r'} u(t, r' + R(t), Θ)` on solver nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltedField {
    pub t: f64,
    pub shift: f64,
    /// `r'` of the first stored node; nodes are `dr` apart.
    pub r0: f64,
    pub dr: f64,
    pub n_r: usize,
    pub n_theta: usize,
    pub values: Vec<f64>,
}

impl TiltedField {
    pub fn r_prime(&self, i: usize) -> f64 {
        self.r0 + i as f64 * self.dr
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_r..(j + 1) * self.n_r]
    }
}

fn coverage(field: &SolutionField, lo: f64, hi: f64) -> Result<()> {
    if lo < field.r_min() - 1e-9 * field.dr || hi > field.r_max() + 1e-9 * field.dr {
        return Err(Error::Coverage {
            what: "radius",
            lo,
            hi,
            have_lo: field.r_min(),
            have_hi: field.r_max(),
        });
    }
    Ok(())
}

/// Tilts the solver nodes with `r' ∈ [−back, front]`.
pub fn to_tilted(field: &SolutionField, p: &FrameParams, back: f64, front: f64) -> Result<TiltedField> {
    let shift = moving_frame_shift(field.t, p)?;
    coverage(field, shift - back, shift + front)?;
    let i0 = ((shift - back) / field.dr - field.origin_cells as f64).ceil().max(0.0) as usize;
    let i1 = (((shift + front) / field.dr - field.origin_cells as f64).floor() as usize).min(field.n_r - 1);
    let rate = p.tilt_rate();
    let n_r = i1 + 1 - i0;
    let mut values = Vec::with_capacity(n_r * field.n_theta);
    for j in 0..field.n_theta {
        let row = field.row(j);
        for (i, &u) in row.iter().enumerate().take(i1 + 1).skip(i0) {
            let rp = field.r(i) - shift;
            values.push((rate * rp).exp() * u);
        }
    }
    Ok(TiltedField {
        t: field.t,
        shift,
        r0: field.r(i0) - shift,
        dr: field.dr,
        n_r,
        n_theta: field.n_theta,
        values,
    })
}

/// `w(τ, ξ, Θ)` on the uniform grid `ξ_j = xi0 + j·dxi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfSimSnapshot {
    pub tau: f64,
    pub xi0: f64,
    pub dxi: f64,
    pub n_xi: usize,
    pub n_theta: usize,
    /// Row-major `[theta][xi]`.
    pub w: Vec<f64>,
    /// Exponent `a` of the weight `e^{aξ²}` used by weighted sup-norms.
    pub weight_exponent: f64,
}

impl SelfSimSnapshot {
    pub fn xi(&self, j: usize) -> f64 {
        self.xi0 + j as f64 * self.dxi
    }

    pub fn theta(&self, j: usize) -> f64 {
        std::f64::consts::TAU * j as f64 / self.n_theta as f64
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.w[j * self.n_xi..(j + 1) * self.n_xi]
    }

    /// Index of the node at `ξ = 0` (the grid is built to contain it).
    pub fn zero_index(&self) -> Option<usize> {
        let s = -self.xi0 / self.dxi;
        let j = s.round();
        ((s - j).abs() < 1e-6 && j >= 0.0 && (j as usize) < self.n_xi).then_some(j as usize)
    }

    /// Builds a snapshot by sampling `f(ξ, Θ)`.
    pub fn from_fn(
        tau: f64,
        xi0: f64,
        dxi: f64,
        n_xi: usize,
        n_theta: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut w = Vec::with_capacity(n_xi * n_theta);
        for j in 0..n_theta {
            let th = std::f64::consts::TAU * j as f64 / n_theta as f64;
            for i in 0..n_xi {
                w.push(f(xi0 + i as f64 * dxi, th));
            }
        }
        SelfSimSnapshot {
            tau,
            xi0,
            dxi,
            n_xi,
            n_theta,
            w,
            weight_exponent: 1.0 / 16.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfSimOptions {
    pub xi_max: f64,
    /// Grid spacing in `ξ`; defaults to `dr/√t` (one node per solver cell).
    pub dxi: Option<f64>,
}

impl Default for SelfSimOptions {
    fn default() -> Self {
        SelfSimOptions {
            xi_max: DEFAULT_XI_MAX,
            dxi: None,
        }
    }
}

/// Self-similar snapshot on `ξ ∈ [−e^{−(1/2−δ)τ}, ξ_max]`. The tilted field
/// `v` is interpolated linearly between solver nodes; the grid contains
/// `ξ = 0`.
pub fn to_selfsim(field: &SolutionField, p: &FrameParams, opts: &SelfSimOptions) -> Result<SelfSimSnapshot> {
    let t = field.t;
    let tau = t.ln();
    let sqrt_t = t.sqrt();
    let dxi = opts.dxi.unwrap_or(field.dr / sqrt_t);
    if !(dxi > 0.0 && opts.xi_max > 0.0) {
        return Err(invalid("selfsim", "dxi and xi_max must be positive"));
    }
    let xi_lo = xi_delta(tau, p.delta, Side::Minus);
    let j_lo = (xi_lo / dxi).floor() as i64;
    let j_hi = (opts.xi_max / dxi).ceil() as i64;
    let shift = moving_frame_shift(t, p)?;
    let r_lo = shift + j_lo as f64 * dxi * sqrt_t;
    let r_hi = shift + j_hi as f64 * dxi * sqrt_t;
    coverage(field, r_lo, r_hi)?;
    let rate = p.tilt_rate();
    let n_xi = (j_hi - j_lo + 1) as usize;
    let mut w = Vec::with_capacity(n_xi * field.n_theta);
    for th in 0..field.n_theta {
        let row = field.row(th);
        for j in j_lo..=j_hi {
            let rp = j as f64 * dxi * sqrt_t;
            let s = ((shift + rp) / field.dr - field.origin_cells as f64).max(0.0);
            let i = (s.floor() as usize).min(field.n_r - 2);
            let f = s - i as f64;
            let tilt = |k: usize| (rate * (field.r(k) - shift)).exp() * row[k];
            let v = tilt(i) + f * (tilt(i + 1) - tilt(i));
            w.push(v / sqrt_t);
        }
    }
    Ok(SelfSimSnapshot {
        tau,
        xi0: j_lo as f64 * dxi,
        dxi,
        n_xi,
        n_theta: field.n_theta,
        w,
        weight_exponent: 1.0 / 16.0,
    })
}

/// Inverse of the self-similar map at one point:
/// `u(t, r) = e^{−(r − R)} √t · w((r − R)/√t)`.
pub fn selfsim_to_u(t: f64, r: f64, p: &FrameParams, w: impl Fn(f64) -> f64) -> Result<f64> {
    let rp = r - moving_frame_shift(t, p)?;
    Ok((-p.tilt_rate() * rp).exp() * t.sqrt() * w(rp / t.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_frame_examples() {
        let p2 = FrameParams::homogeneous(2).unwrap();
        let p1 = FrameParams::homogeneous(1).unwrap();
        let e = std::f64::consts::E;
        assert_eq!(moving_frame_shift(1.0, &p2).unwrap(), 2.0);
        assert!((moving_frame_shift(e, &p2).unwrap() - (2.0 * e - 2.0)).abs() < 1e-14);
        assert!((moving_frame_shift(e, &p1).unwrap() - (2.0 * e - 1.5)).abs() < 1e-14);
        assert!(moving_frame_shift(0.5, &p1).is_err());
    }

    #[test]
    fn grid_matched_speed() {
        let (l, c) = discrete_minimal_speed(1.0, 1e-4);
        assert!((l - 1.0).abs() < 1e-8 && (c - 2.0).abs() < 1e-8);
        let dr = 0.1;
        let (l, c) = discrete_minimal_speed(1.0, dr);
        // σ(λ)/λ is stationary at λ and exceeds c nearby
        let g = |x: f64| (2.0 * ((x * dr).cosh() - 1.0) / (dr * dr) + 1.0) / x;
        assert!((g(l) - c).abs() < 1e-14 && g(l - 1e-3) > c && g(l + 1e-3) > c);
        assert!((c - 2.0 - dr * dr / 12.0).abs() < 1e-5, "{c}");
        let p = FrameParams::homogeneous(2).unwrap().matched_to_grid(dr).unwrap();
        assert_eq!((p.c_star, p.tilt_rate(), p.k), (c, l, 2.0));
    }

    #[test]
    fn heterogeneous_k() {
        assert_eq!(FrameParams::heterogeneous(2, 1.0, 1.0).unwrap().k, 1.5);
        assert_eq!(FrameParams::heterogeneous(2, 1.0, 2.0).unwrap().k, 2.0);
        assert!(FrameParams::heterogeneous(2, 1.0, 0.5).is_err());
    }

    #[test]
    fn h_limits() {
        let p2 = FrameParams::homogeneous(2).unwrap();
        let h = h_eval(40.0, 1.0, &p2).unwrap();
        assert!((h + 1.5).abs() < 1e-8);
        let p1 = FrameParams::homogeneous(1).unwrap();
        assert_eq!(h_eval(3.0, 0.7, &p1).unwrap(), -1.5);
        let h = h_eval(5.0, 1.0, &p2).unwrap();
        assert!((h + 1.5).abs() <= (-1.25f64).exp());
        assert!(matches!(h_eval(0.0, -5.0, &p2), Err(Error::FrameValidity(_))));
    }

    #[test]
    fn l2_cancels_in_one_dimension() {
        let p1 = FrameParams::homogeneous(1).unwrap();
        for (tau, xi) in [(1.0, 0.3), (4.0, 2.0), (9.0, 5.0)] {
            for side in [Side::Plus, Side::Minus] {
                let (l1, l2) = l_coeffs(tau, xi, side, &p1).unwrap();
                assert!((l2 + 0.25 * xi * l1).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn xi_delta_is_t_to_the_delta() {
        for tau in [1.0, 3.0, 7.5] {
            let x = xi_delta(tau, 0.1, Side::Plus) * (0.5 * tau).exp();
            assert!((x - (0.1 * tau).exp()).abs() < 1e-12 * x);
        }
    }

    #[test]
    fn operators_vanish_on_zero() {
        let w = vec![0.0; 9];
        for kind in [OperatorKind::L, OperatorKind::M] {
            let out = apply_operator(kind, &w, 0.0, 0.1).unwrap();
            assert!(out.values.iter().all(|&v| v == 0.0));
        }
        assert!(apply_operator(OperatorKind::L, &w[..4], 0.0, 0.1).is_err());
    }

    #[test]
    fn eigen_examples() {
        let e = eigen_data(1.0).unwrap();
        assert!((e.lambda1 - PI * PI / 4.0).abs() < 1e-15);
        assert!(e.require_admissible().is_err());
        let e = eigen_data(DEFAULT_A0).unwrap();
        assert!((e.lambda1 - 100.0).abs() < 1e-12);
        e.require_admissible().unwrap();
        assert_eq!(e.phi1(0.0), 1.0);
        assert!(eigen_data(0.0).is_err());
    }
}
